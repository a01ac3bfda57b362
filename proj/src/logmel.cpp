#include "adscreen/logmel.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "adscreen/error.hpp"
#include "adscreen/fft.hpp"
#include "adscreen/weights_io.hpp"

namespace adscreen {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank() {
  const int bins = kStftFft / 2 + 1;
  Tensor fb({kMelBands, bins}, 0.0f);
  const double mel_lo = hz_to_mel(kMelFmin), mel_hi = hz_to_mel(kMelFmax);
  std::vector<double> edges(kMelBands + 2);
  for (int i = 0; i < kMelBands + 2; ++i)
    edges[static_cast<size_t>(i)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (kMelBands + 1));
  for (int b = 0; b < kMelBands; ++b) {
    const double lo = edges[static_cast<size_t>(b)], ctr = edges[static_cast<size_t>(b) + 1],
                 hi = edges[static_cast<size_t>(b) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * kAnalysisRate / kStftFft;
      const double up = (f - lo) / (ctr - lo);
      const double down = (hi - f) / (hi - ctr);
      const double w = std::min(up, down);
      if (w > 0.0) fb.at2(b, k) = static_cast<float>(w);
    }
  }
  return fb;
}

Tensor logmel_spectrogram(const AudioClip& clip) {
  if (clip.sample_rate != kAnalysisRate)
    throw Error("logmel: clip is at " + std::to_string(clip.sample_rate) + " Hz, expected " +
                std::to_string(kAnalysisRate));
  const size_t n = clip.samples.size();
  if (n < static_cast<size_t>(kStftWindow))
    throw Error("logmel: clip of " + std::to_string(n) + " samples is shorter than one " +
                std::to_string(kStftWindow) + "-sample window");
  const int t = 1 + static_cast<int>((n - kStftWindow) / kStftHop);
  const int bins = kStftFft / 2 + 1;

  static const Tensor fb = mel_filterbank();
  std::vector<double> win(kStftWindow);
  for (int i = 0; i < kStftWindow; ++i)
    win[static_cast<size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / kStftWindow));

  Tensor out({t, kMelBands});
  std::vector<double> frame(kStftWindow);
  for (int m = 0; m < t; ++m) {
    for (int i = 0; i < kStftWindow; ++i)
      frame[static_cast<size_t>(i)] =
          static_cast<double>(clip.samples[static_cast<size_t>(m) * kStftHop + i]) * win[static_cast<size_t>(i)];
    const auto spec = rfft(frame, kStftFft);
    // accumulate in f64 and cast once; keeps the silence case bit-exact
    for (int b = 0; b < kMelBands; ++b) {
      double acc = 0.0;
      for (int k = 0; k < bins; ++k) {
        const float w = fb.at2(b, k);
        if (w != 0.0f) acc += static_cast<double>(w) * std::abs(spec[static_cast<size_t>(k)]);
      }
      out.at2(m, b) = static_cast<float>(std::log(acc + kLogOffset));
    }
  }
  return out;
}

std::vector<LogMelPatch> partition_patches(const Tensor& spec, int k, const std::string& clip_id) {
  if (spec.rank() != 2 || spec.dim(1) != kMelBands)
    throw Error("partition_patches: expected [T," + std::to_string(kMelBands) + "] spectrogram, got " +
                spec.shape_str());
  if (k <= 0) throw Error("partition_patches: k must be positive");
  const int t = spec.dim(0);
  std::vector<LogMelPatch> patches;
  for (int start = 0; start + k <= t; start += k) {
    LogMelPatch p;
    p.clip_id = clip_id;
    p.start_frame = start;
    p.frames = Tensor({k, kMelBands});
    std::copy(spec.data() + static_cast<size_t>(start) * kMelBands,
              spec.data() + static_cast<size_t>(start + k) * kMelBands, p.frames.data());
    patches.push_back(std::move(p));
  }
  return patches;
}

void save_feature_cache(const std::string& path, const Tensor& spec) {
  WeightFile wf;
  wf.put("logmel", spec);
  wf.save(path);
}

Tensor load_feature_cache(const std::string& path) {
  const WeightFile wf = WeightFile::load(path);
  const WeightEntry& e = wf.get("logmel");
  if (e.shape.size() != 2 || e.shape[1] != kMelBands)
    throw Error("feature cache '" + path + "' has unexpected shape");
  Tensor t(e.shape);
  std::copy(e.values.begin(), e.values.end(), t.data());
  return t;
}

}  // namespace adscreen
