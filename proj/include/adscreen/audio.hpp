#pragma once

#include <string>
#include <vector>

namespace adscreen {

// Mono waveform at a known rate; samples normalized to [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 0;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// PCM WAV reader: 8/16/24-bit integer or 32-bit float, any channel count
// (channels averaged to mono). Anything else is rejected with a message
// naming the offending field.
AudioClip load_wav(const std::string& path);

// 16-bit PCM mono writer; samples clamped to [-1, 1].
void save_wav(const std::string& path, const AudioClip& clip);

// Band-limited windowed-sinc resampling. Output length is
// round(len * target / source); equal rates return the input unchanged.
AudioClip resample(const AudioClip& clip, int target_rate);

}  // namespace adscreen
