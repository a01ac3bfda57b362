#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "adscreen/config.hpp"
#include "adscreen/encoder.hpp"
#include "adscreen/manifest.hpp"
#include "adscreen/report.hpp"
#include "adscreen/tensor.hpp"
#include "adscreen/text_model.hpp"
#include "adscreen/word_vectors.hpp"
#include "adscreen/wordpiece.hpp"

namespace adscreen {

// The text branch wired end to end with consistent widths. Owns every part;
// `predictor` points into the other members.
struct TextStack {
  std::unique_ptr<WordPieceVocab> vocab;
  std::unique_ptr<WordVectorTable> wordvecs;
  std::unique_ptr<ContextualEmbedder> ctx;
  std::unique_ptr<ContextualEmbedder> sent;
  std::unique_ptr<TextModel> model;
  std::unique_ptr<TextPredictor> predictor;
};

// Config readers with validation beyond raw types.
int patch_frames(const RunConfig& cfg);      // segment: short -> 96, long -> 496
bool denoise_enabled(const RunConfig& cfg);  // auto resolves against source
TranscriptSource transcript_source(const RunConfig& cfg);
std::string features_dir(const RunConfig& cfg);  // empty key -> <out>/features
std::string models_dir(const RunConfig& cfg);    // empty key -> <out>

// Transcript from the column the source selects; .cha files keep the PAR
// tier, anything else reads as plain text.
Transcript load_subject_transcript(const Manifest& m, const SubjectRecord& r,
                                   TranscriptSource source);

// Log-mel spectrogram for one subject: reuses a cache file when cache_dir
// has one, otherwise load -> (denoise) -> resample -> logmel.
Tensor subject_spectrogram(const Manifest& m, const SubjectRecord& r, bool denoise,
                           const std::string& cache_dir);

// Fresh, untrained stack; the vocabulary is built from the given transcripts.
TextStack make_text_stack(const RunConfig& cfg, const std::vector<Transcript>& vocab_source,
                          uint64_t seed);
// Stack restored from a train-text output directory (strict weight load).
TextStack load_text_stack(const RunConfig& cfg, const std::string& dir);

// Subcommand bodies shared by the CLI and tests. Each logs the resolved
// config and seed, validates its required keys, and writes artifacts plus
// .meta.json sidecars under the configured output directory.
void run_synth(const RunConfig& cfg, std::ostream& log);
void run_features(const RunConfig& cfg, std::ostream& log);
void run_train_audio(const RunConfig& cfg, std::ostream& log);
void run_train_text(const RunConfig& cfg, std::ostream& log);
void run_predict(const RunConfig& cfg, std::ostream& log);
void run_fuse(const RunConfig& cfg, std::ostream& log);
EvalReport run_evaluate(const RunConfig& cfg, std::ostream& log);

}  // namespace adscreen
