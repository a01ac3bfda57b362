#include "adscreen/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "adscreen/error.hpp"
#include "adscreen/fft.hpp"

namespace adscreen {
namespace {

constexpr size_t kFrame = 512;
constexpr size_t kHop = 256;

std::vector<double> hann_periodic(size_t n) {
  std::vector<double> w(n);
  for (size_t i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / n));
  return w;
}

}  // namespace

double expint_e1(double x) {
  if (x <= 0.0) throw Error("expint_e1: argument must be positive");
  if (x < 1.0) {
    // power series: E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k k!)
    constexpr double kEulerGamma = 0.57721566490153286;
    double sum = 0.0, term = 1.0;
    for (int k = 1; k <= 40; ++k) {
      term *= -x / k;
      const double add = -term / k;
      sum += add;
      if (std::fabs(add) < 1e-18 * std::fabs(sum)) break;
    }
    return -kEulerGamma - std::log(x) + sum;
  }
  // modified Lentz continued fraction:
  // E1(x) = e^-x / (x + 1 - 1^2/(x + 3 - 2^2/(x + 5 - ...)))
  const double tiny = 1e-300;
  double b = x + 1.0, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= 200; ++i) {
    const double a = -static_cast<double>(i) * i;
    b += 2.0;
    d = a * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + a / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-15) break;
  }
  return h * std::exp(-x);
}

AudioClip denoise_mmse_lsa(const AudioClip& clip, const DenoiseOptions& opts) {
  if (clip.sample_rate <= 0) throw Error("denoise: invalid sample rate");
  const size_t n = clip.samples.size();
  if (n < kFrame)
    throw Error("denoise: clip of " + std::to_string(n) + " samples is shorter than one " +
                std::to_string(kFrame) + "-sample frame");

  const size_t nframes = 1 + (n - kFrame + kHop - 1) / kHop;
  const size_t padded = kFrame + (nframes - 1) * kHop;
  const std::vector<double> win = hann_periodic(kFrame);
  const size_t bins = kFrame / 2 + 1;

  // analysis
  std::vector<std::vector<std::complex<double>>> stft(nframes);
  std::vector<double> frame(kFrame);
  for (size_t m = 0; m < nframes; ++m) {
    for (size_t i = 0; i < kFrame; ++i) {
      const size_t idx = m * kHop + i;
      frame[i] = (idx < n ? static_cast<double>(clip.samples[idx]) : 0.0) * win[i];
    }
    stft[m] = rfft(frame, kFrame);
  }

  // noise PSD from the leading frames, floored to keep ratios finite
  const size_t init = std::min<size_t>(static_cast<size_t>(std::max(opts.noise_frames, 1)), nframes);
  std::vector<double> noise_psd(bins, 0.0);
  for (size_t m = 0; m < init; ++m)
    for (size_t k = 0; k < bins; ++k) noise_psd[k] += std::norm(stft[m][k]);
  for (size_t k = 0; k < bins; ++k) noise_psd[k] = std::max(noise_psd[k] / init, 1e-12);

  // decision-directed gain, frame by frame
  std::vector<double> prev_amp2(bins, 0.0);  // squared enhanced amplitude of previous frame
  for (size_t m = 0; m < nframes; ++m) {
    for (size_t k = 0; k < bins; ++k) {
      const double power = std::norm(stft[m][k]);
      const double gamma = power / noise_psd[k];
      const double xi =
          std::max(opts.alpha * prev_amp2[k] / noise_psd[k] + (1.0 - opts.alpha) * std::max(gamma - 1.0, 0.0),
                   1e-6);
      const double v = std::clamp(xi * gamma / (1.0 + xi), 1e-10, 700.0);
      double gain = xi / (1.0 + xi) * std::exp(0.5 * expint_e1(v));
      gain = std::clamp(gain, opts.gain_floor, 1.0);
      stft[m][k] *= gain;
      prev_amp2[k] = gain * gain * power;
    }
  }

  // overlap-add; divide by the summed analysis window so a unit gain
  // reconstructs the input exactly, edges included
  std::vector<double> acc(padded, 0.0), wsum(padded, 0.0);
  for (size_t m = 0; m < nframes; ++m) {
    const std::vector<double> t = irfft(stft[m], kFrame);
    for (size_t i = 0; i < kFrame; ++i) {
      acc[m * kHop + i] += t[i];
      wsum[m * kHop + i] += win[i];
    }
  }
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    out.samples[i] = static_cast<float>(wsum[i] > 1e-9 ? acc[i] / wsum[i] : 0.0);
  return out;
}

}  // namespace adscreen
