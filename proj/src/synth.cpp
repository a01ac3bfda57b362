#include "adscreen/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "adscreen/audio.hpp"
#include "adscreen/error.hpp"
#include "adscreen/rng.hpp"

namespace adscreen {
namespace {

constexpr int kRate = 16000;
constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

// Age bins and their corpus proportions (counts 32/154/193/88/10 of 477).
struct AgeBin {
  int lo, hi;
  double fraction;
};
const AgeBin kAgeBins[] = {{46, 55, 32.0 / 477.0},
                           {56, 65, 154.0 / 477.0},
                           {66, 75, 193.0 / 477.0},
                           {76, 85, 88.0 / 477.0},
                           {86, 95, 10.0 / 477.0}};

const char* kFillers[] = {"uh", "um", "er", "eh", "hm"};

// Picture-description vocabulary shared by both classes.
const char* kWords[] = {
    "the",    "boy",    "girl",   "mother", "cookie", "jar",     "stool",  "sink",
    "water",  "floor",  "window", "curtain", "dish",  "plate",   "cup",    "kitchen",
    "reaches", "climbs", "falls",  "spills", "washes", "dries",  "takes",  "hands",
    "looks",  "stands", "little", "tall",   "open",   "full",    "wet",    "outside",
    "garden", "path",   "summer", "apron",  "shoe",   "cabinet", "counter", "overflowing"};
constexpr int kWordCount = static_cast<int>(sizeof(kWords) / sizeof(kWords[0]));
constexpr int kFillerCount = static_cast<int>(sizeof(kFillers) / sizeof(kFillers[0]));

int sample_age(Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (const auto& b : kAgeBins) {
    acc += b.fraction;
    if (u < acc) return b.lo + static_cast<int>(rng.below(b.hi - b.lo + 1));
  }
  const auto& last = kAgeBins[4];
  return last.lo + static_cast<int>(rng.below(last.hi - last.lo + 1));
}

std::vector<float> synth_wave(Rng& rng, int label) {
  const double dur = rng.uniform(5.5, 6.5);
  const int n = static_cast<int>(dur * kRate);
  std::vector<float> s(static_cast<size_t>(n), 0.0f);

  // Voiced base: harmonic stack under a slow amplitude envelope.
  const double f0 = rng.uniform(120.0, 260.0);
  double phase[4], amp[4];
  for (int k = 0; k < 4; ++k) {
    phase[k] = rng.uniform(0.0, kTwoPi);
    amp[k] = 0.5 / (k + 1);
  }
  const double fe = rng.uniform(0.5, 2.0);
  const double pe = rng.uniform(0.0, kTwoPi);
  const double noise_amp = rng.uniform(0.005, 0.02);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kRate;
    double v = 0.0;
    for (int k = 0; k < 4; ++k) v += amp[k] * std::sin(kTwoPi * f0 * (k + 1) * t + phase[k]);
    v *= 0.6 + 0.4 * std::sin(kTwoPi * fe * t + pe);
    v += noise_amp * rng.normal();
    s[static_cast<size_t>(i)] = static_cast<float>(v);
  }

  if (label == 1) {
    // Band-limited 2-4 kHz bursts, roughly one per second.
    const int bursts = 4 + static_cast<int>(rng.below(static_cast<int64_t>(dur) - 3));
    for (int b = 0; b < bursts; ++b) {
      const double len = rng.uniform(0.15, 0.35);
      const double start = rng.uniform(0.0, dur - len - 0.05);
      double bf[40], bp[40];
      for (int j = 0; j < 40; ++j) {
        bf[j] = rng.uniform(2000.0, 4000.0);
        bp[j] = rng.uniform(0.0, kTwoPi);
      }
      const double bamp = 0.15 * std::sqrt(2.0 / 40.0);
      const int i0 = static_cast<int>(start * kRate);
      const int i1 = std::min(n, i0 + static_cast<int>(len * kRate));
      for (int i = i0; i < i1; ++i) {
        const double t = static_cast<double>(i) / kRate;
        const double w = 0.5 - 0.5 * std::cos(kTwoPi * (i - i0) / std::max(1, i1 - i0 - 1));
        double v = 0.0;
        for (int j = 0; j < 40; ++j) v += std::sin(kTwoPi * bf[j] * t + bp[j]);
        s[static_cast<size_t>(i)] += static_cast<float>(bamp * w * v);
      }
    }
    // Long pauses, zeroed after everything else so they stay silent.
    const int pauses = 2 + static_cast<int>(rng.below(2));
    for (int p = 0; p < pauses; ++p) {
      const double len = rng.uniform(0.3, 0.8);
      const double start = rng.uniform(0.0, dur - len - 0.05);
      const int i0 = static_cast<int>(start * kRate);
      const int i1 = std::min(n, i0 + static_cast<int>(len * kRate));
      for (int i = i0; i < i1; ++i) s[static_cast<size_t>(i)] = 0.0f;
    }
  }

  float peak = 0.0f;
  for (float v : s) peak = std::max(peak, std::abs(v));
  if (peak > 1e-9f)
    for (float& v : s) v *= 0.5f / peak;
  return s;
}

std::vector<std::string> synth_tokens(Rng& rng, int label) {
  const double p_filler = label == 1 ? 0.4 : 0.05;
  const double p_repeat = label == 1 ? 0.15 : 0.02;
  const int count = 40 + static_cast<int>(rng.below(21));
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(count) + 8);
  std::string last;
  while (static_cast<int>(out.size()) < count) {
    if (rng.uniform() < p_filler) {
      out.push_back(kFillers[rng.below(kFillerCount)]);
      continue;
    }
    std::string w = kWords[rng.below(kWordCount)];
    out.push_back(w);
    if (!last.empty() && rng.uniform() < p_repeat) out.push_back(w);  // broken repetition
    last = w;
  }
  return out;
}

// ASR-style degradation: fillers mostly dropped, occasional word drops and
// substitutions. Mirrors transcription that misses disfluencies.
std::vector<std::string> degrade_tokens(Rng& rng, const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    bool filler = false;
    for (const char* f : kFillers) filler |= t == f;
    const double u = rng.uniform();
    if (filler && u < 0.3) continue;
    if (!filler && u < 0.05) continue;
    if (rng.uniform() < 0.05)
      out.push_back(kWords[rng.below(kWordCount)]);
    else
      out.push_back(t);
  }
  if (out.empty()) out.push_back(tokens.empty() ? "uh" : tokens.front());
  return out;
}

void write_text(const std::string& path, const std::vector<std::string>& tokens) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("synth: cannot write " + path);
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) f << ' ';
    f << tokens[i];
  }
  f << '\n';
}

}  // namespace

Manifest synth_corpus(int n_subjects, uint64_t seed, const std::string& out_dir) {
  if (n_subjects < 4)
    throw Error("synth: needs at least 4 subjects, got " + std::to_string(n_subjects));
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "wav");
  fs::create_directories(fs::path(out_dir) / "transcripts");

  Rng rng(Rng::derive(seed, "synth"));
  std::vector<SubjectRecord> rows;
  rows.reserve(static_cast<size_t>(n_subjects));
  for (int i = 0; i < n_subjects; ++i) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "s%03d", i + 1);
    SubjectRecord r;
    r.subject_id = idbuf;
    r.label = i % 2 == 0 ? 1 : 0;
    r.age = sample_age(rng);
    r.gender = rng.uniform() < 0.65 ? "female" : "male";
    r.audio_path = "wav/" + r.subject_id + ".wav";
    r.transcript_path = "transcripts/" + r.subject_id + ".txt";
    r.asr_transcript_path = "transcripts/" + r.subject_id + ".asr.txt";
    r.notes = "synthetic";

    AudioClip clip;
    clip.sample_rate = kRate;
    clip.samples = synth_wave(rng, r.label);
    save_wav((fs::path(out_dir) / r.audio_path).string(), clip);

    const auto tokens = synth_tokens(rng, r.label);
    write_text((fs::path(out_dir) / r.transcript_path).string(), tokens);
    write_text((fs::path(out_dir) / r.asr_transcript_path).string(), degrade_tokens(rng, tokens));

    rows.push_back(std::move(r));
  }

  const std::string manifest_path = (fs::path(out_dir) / "manifest.csv").string();
  save_manifest(manifest_path, rows);
  return ingest_manifest(manifest_path);
}

}  // namespace adscreen
