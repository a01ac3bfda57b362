#pragma once

#include <string>
#include <vector>

#include "adscreen/audio.hpp"
#include "adscreen/tensor.hpp"

namespace adscreen {

// Analysis constants for the log-mel frontend. The band count is part of the
// feature definition and deliberately not configurable.
inline constexpr int kAnalysisRate = 16000;
inline constexpr int kMelBands = 64;
inline constexpr int kStftWindow = 400;  // 25 ms at 16 kHz
inline constexpr int kStftHop = 160;     // 10 ms
inline constexpr int kStftFft = 512;
inline constexpr double kMelFmin = 125.0;
inline constexpr double kMelFmax = 7500.0;
inline constexpr double kLogOffset = 0.01;

// One k x 64 slice of a clip's spectrogram plus where it came from.
struct LogMelPatch {
  Tensor frames;        // [k, 64]
  std::string clip_id;
  int start_frame = 0;
};

// HTK-style mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filterbank, [kMelBands, kStftFft/2 + 1].
Tensor mel_filterbank();

// Hann STFT magnitude -> 64 mel bands -> log(mel + offset). Input must be at
// the analysis rate; frames T = 1 + floor((N - window) / hop), N >= window.
Tensor logmel_spectrogram(const AudioClip& clip);

// Non-overlapping k-frame windows; incomplete tail dropped. T < k gives an
// empty list, the caller decides whether that clip is usable.
std::vector<LogMelPatch> partition_patches(const Tensor& spec, int k, const std::string& clip_id);

// Feature cache: one container file per clip holding array "logmel" [T, 64].
void save_feature_cache(const std::string& path, const Tensor& spec);
Tensor load_feature_cache(const std::string& path);

}  // namespace adscreen
