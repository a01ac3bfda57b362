#include <cmath>

#include "adscreen/audio.hpp"
#include "adscreen/error.hpp"

namespace adscreen {
namespace {

constexpr int kHalfTaps = 32;  // sinc taps per side

double sinc(double x) {
  if (std::fabs(x) < 1e-12) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

}  // namespace

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw Error("resample: target rate must be positive");
  if (clip.sample_rate <= 0 || clip.samples.empty()) throw Error("resample: empty clip");
  if (target_rate == clip.sample_rate) return clip;

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const size_t out_len = static_cast<size_t>(std::llround(clip.samples.size() * ratio));
  // cutoff at the lower of the two Nyquist rates, expressed per source sample
  const double fc = 0.5 * std::min(1.0, ratio);
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  const int n = static_cast<int>(clip.samples.size());
  for (size_t i = 0; i < out_len; ++i) {
    const double center = static_cast<double>(i) / ratio;
    const int lo = static_cast<int>(std::floor(center)) - kHalfTaps + 1;
    const int hi = static_cast<int>(std::floor(center)) + kHalfTaps;
    double acc = 0.0;
    for (int j = lo; j <= hi; ++j) {
      if (j < 0 || j >= n) continue;  // zero outside the clip
      const double d = center - j;
      // Hann-windowed sinc over the 2*kHalfTaps support
      const double w = 0.5 * (1.0 + std::cos(M_PI * d / kHalfTaps));
      acc += clip.samples[static_cast<size_t>(j)] * 2.0 * fc * sinc(2.0 * fc * d) * w;
    }
    out.samples[i] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace adscreen
