#pragma once

#include <cstdint>
#include <string>

#include "adscreen/manifest.hpp"

namespace adscreen {

// Writes a deterministic labeled corpus under out_dir: wav/<id>.wav,
// transcripts/<id>.txt and <id>.asr.txt, and manifest.csv with relative
// paths. Labels alternate AD/HC. AD clips mix band-limited noise bursts and
// long silences into the voiced base tone; AD transcripts carry elevated
// filler density and broken repetitions. Ages follow the corpus bin
// proportions, genders split 0.65/0.35 female/male. Same (n, seed) produces
// byte-identical files. n_subjects must be at least 4.
Manifest synth_corpus(int n_subjects, uint64_t seed, const std::string& out_dir);

}  // namespace adscreen
