#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>

#include "adscreen/audio.hpp"
#include "adscreen/denoise.hpp"
#include "adscreen/error.hpp"
#include "adscreen/fft.hpp"
#include "adscreen/logmel.hpp"
#include "adscreen/rng.hpp"

using namespace adscreen;

namespace {

AudioClip sine(double freq, double seconds, int rate, float amp = 0.5f) {
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(static_cast<size_t>(seconds * rate));
  for (size_t i = 0; i < c.samples.size(); ++i)
    c.samples[i] = amp * static_cast<float>(std::sin(2.0 * M_PI * freq * i / rate));
  return c;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("fft matches a brute-force DFT") {
  Rng rng(1);
  const size_t n = 256;
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  const auto fast = rfft(x, n);
  for (size_t k = 0; k < fast.size(); k += 17) {
    std::complex<double> slow{0.0, 0.0};
    for (size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) * i / n;
      slow += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    CHECK(std::abs(fast[k] - slow) <= 1e-9 * std::max(1.0, std::abs(slow)));
  }

  // irfft(rfft(x)) == x
  const auto back = irfft(fast, n);
  for (size_t i = 0; i < n; ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-10));

  std::vector<std::complex<double>> bad(100);
  CHECK_THROWS_AS(fft_inplace(bad), Error);
}

TEST_CASE("wav round-trip and scaling conventions") {
  // hand-built 16-bit mono file with known extreme samples
  const std::string path = tmp_path("adscreen_16.wav");
  {
    AudioClip c;
    c.sample_rate = 16000;
    c.samples = {0.0f, 1.0f, -1.0f, 0.25f};
    save_wav(path, c);
  }
  const AudioClip r = load_wav(path);
  CHECK(r.sample_rate == 16000);
  REQUIRE(r.samples.size() == 4);
  CHECK(r.samples[0] == doctest::Approx(0.0f));
  CHECK(r.samples[1] == doctest::Approx(32767.0f / 32768.0f));
  CHECK(r.samples[2] == doctest::Approx(-32767.0f / 32768.0f));
  CHECK(r.samples[3] == doctest::Approx(0.25f).epsilon(1e-3));

  // stereo averaging: L=0.2, R=0.4 -> 0.3 (hand-assembled header)
  const std::string st = tmp_path("adscreen_stereo.wav");
  {
    std::ofstream out(st, std::ios::binary);
    auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    out.write("RIFF", 4);
    u32(36 + 8);
    out.write("WAVEfmt ", 8);
    u32(16);
    u16(1);
    u16(2);
    u32(8000);
    u32(8000 * 4);
    u16(4);
    u16(16);
    out.write("data", 4);
    u32(8);
    const int16_t frames[4] = {static_cast<int16_t>(0.2 * 32768), static_cast<int16_t>(0.4 * 32768),
                               0, 0};
    out.write(reinterpret_cast<const char*>(frames), 8);
  }
  const AudioClip sr = load_wav(st);
  CHECK(sr.sample_rate == 8000);
  REQUIRE(sr.samples.size() == 2);
  CHECK(sr.samples[0] == doctest::Approx(0.3f).epsilon(1e-3));

  CHECK_THROWS_WITH_AS(load_wav(tmp_path("missing_adscreen.wav")), doctest::Contains("cannot open"),
                       Error);

  // truncated file
  const std::string tr = tmp_path("adscreen_trunc.wav");
  {
    std::ofstream out(tr, std::ios::binary);
    out.write("RIFF\x10\x00\x00\x00WAVE", 12);
  }
  CHECK_THROWS_AS(load_wav(tr), Error);

  std::filesystem::remove(path);
  std::filesystem::remove(st);
  std::filesystem::remove(tr);
}

TEST_CASE("silent wav decodes to zeros") {
  const std::string path = tmp_path("adscreen_silence.wav");
  AudioClip c;
  c.sample_rate = 16000;
  c.samples.assign(1600, 0.0f);
  save_wav(path, c);
  const AudioClip r = load_wav(path);
  for (float v : r.samples) CHECK(v == 0.0f);
  std::filesystem::remove(path);
}

TEST_CASE("resample length and identity") {
  const AudioClip one_sec = sine(440.0, 1.0, 8000);
  const AudioClip up = resample(one_sec, 16000);
  CHECK(up.sample_rate == 16000);
  CHECK(up.samples.size() == 16000);

  const AudioClip same = resample(one_sec, 8000);
  CHECK(same.samples == one_sec.samples);
}

TEST_CASE("resample keeps a 440 Hz tone at 440 Hz") {
  const AudioClip src = sine(440.0, 1.0, 44100);
  const AudioClip dst = resample(src, 16000);
  REQUIRE(dst.samples.size() == 16000);
  // 4096-point DFT bin spacing is ~3.9 Hz, well under the one-bin tolerance
  const size_t n = 4096;
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = dst.samples[4000 + i];
  const auto spec = rfft(x, n);
  size_t best = 0;
  for (size_t k = 1; k < spec.size(); ++k)
    if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
  const double freq = static_cast<double>(best) * 16000.0 / n;
  CHECK(std::fabs(freq - 440.0) <= 16000.0 / n);
}

TEST_CASE("expint agrees with reference values") {
  // reference: Abramowitz & Stegun table 5.1
  CHECK(expint_e1(0.5) == doctest::Approx(0.559773595).epsilon(1e-8));
  CHECK(expint_e1(1.0) == doctest::Approx(0.219383934).epsilon(1e-8));
  CHECK(expint_e1(2.0) == doctest::Approx(0.048900511).epsilon(1e-8));
  CHECK(expint_e1(10.0) == doctest::Approx(4.15697e-6).epsilon(1e-4));
  CHECK_THROWS_AS(expint_e1(0.0), Error);
}

TEST_CASE("denoise: zeros in, zeros out, length preserved") {
  AudioClip c;
  c.sample_rate = 16000;
  c.samples.assign(5000, 0.0f);
  const AudioClip out = denoise_mmse_lsa(c);
  CHECK(out.sample_rate == 16000);
  REQUIRE(out.samples.size() == 5000);
  for (float v : out.samples) CHECK(v == 0.0f);

  AudioClip shorty;
  shorty.sample_rate = 16000;
  shorty.samples.assign(100, 0.1f);
  CHECK_THROWS_AS(denoise_mmse_lsa(shorty), Error);
}

TEST_CASE("denoise improves segmental SNR of a noisy tone by >= 3 dB") {
  const int rate = 16000;
  const size_t lead = 3200;   // noise-only lead-in covers the PSD init frames
  const size_t total = 3 * rate;
  Rng rng(99);
  std::vector<float> clean(total, 0.0f), noise(total);
  for (size_t i = lead; i < total; ++i)
    clean[i] = 0.2f * static_cast<float>(std::sin(2.0 * M_PI * 1000.0 * i / rate));
  // white noise scaled to 0 dB SNR against the tone (tone RMS = 0.2/sqrt(2))
  const float nscale = 0.2f / std::sqrt(2.0f);
  for (size_t i = 0; i < total; ++i) noise[i] = nscale * static_cast<float>(rng.normal());

  AudioClip noisy;
  noisy.sample_rate = rate;
  noisy.samples.resize(total);
  for (size_t i = 0; i < total; ++i) noisy.samples[i] = clean[i] + noise[i];
  const AudioClip enhanced = denoise_mmse_lsa(noisy);
  REQUIRE(enhanced.samples.size() == total);

  // segmental SNR against the known clean part, over the tone region
  auto seg_snr = [&](const std::vector<float>& sig) {
    double acc = 0.0;
    int segs = 0;
    for (size_t s = lead; s + 512 <= total; s += 512) {
      double sp = 0.0, np = 0.0;
      for (size_t i = s; i < s + 512; ++i) {
        sp += static_cast<double>(clean[i]) * clean[i];
        const double e = static_cast<double>(sig[i]) - clean[i];
        np += e * e;
      }
      acc += 10.0 * std::log10(std::max(sp, 1e-12) / std::max(np, 1e-12));
      ++segs;
    }
    return acc / segs;
  };
  const double before = seg_snr(noisy.samples);
  const double after = seg_snr(enhanced.samples);
  CHECK(after - before >= 3.0);
}

TEST_CASE("denoise keeps a clean tone nearly intact") {
  const AudioClip tone = sine(800.0, 1.0, 16000);
  const AudioClip out = denoise_mmse_lsa(tone);
  REQUIRE(out.samples.size() == tone.samples.size());
  // Pearson correlation; the gain floor may rescale, correlation must survive
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const double n = static_cast<double>(tone.samples.size());
  for (size_t i = 0; i < tone.samples.size(); ++i) {
    const double a = tone.samples[i], b = out.samples[i];
    sx += a;
    sy += b;
    sxx += a * a;
    syy += b * b;
    sxy += a * b;
  }
  const double corr = (n * sxy - sx * sy) /
                      std::sqrt(std::max((n * sxx - sx * sx) * (n * syy - sy * sy), 1e-30));
  CHECK(corr >= 0.95);
}

TEST_CASE("logmel frame count and silence value") {
  AudioClip c;
  c.sample_rate = 16000;
  c.samples.assign(15360, 0.0f);  // 960 ms
  const Tensor spec = logmel_spectrogram(c);
  CHECK(spec.dim(0) == 94);
  CHECK(spec.dim(1) == 64);
  const float want = std::log(0.01f);
  for (float v : spec.values()) CHECK(v == doctest::Approx(want));

  AudioClip tiny;
  tiny.sample_rate = 16000;
  tiny.samples.assign(399, 0.0f);
  CHECK_THROWS_AS(logmel_spectrogram(tiny), Error);

  AudioClip wrong_rate;
  wrong_rate.sample_rate = 8000;
  wrong_rate.samples.assign(8000, 0.0f);
  CHECK_THROWS_WITH_AS(logmel_spectrogram(wrong_rate), doctest::Contains("8000"), Error);
}

TEST_CASE("logmel tracks a 1 kHz tone in a stable band") {
  const AudioClip tone = sine(1000.0, 1.0, 16000);
  const Tensor spec = logmel_spectrogram(tone);
  int first_arg = -1;
  for (int t = 0; t < spec.dim(0); ++t) {
    int arg = 0;
    for (int b = 1; b < 64; ++b)
      if (spec.at2(t, b) > spec.at2(t, arg)) arg = b;
    if (first_arg < 0) first_arg = arg;
    CHECK(arg == first_arg);
  }
  // the winning band's center should sit near 1 kHz
  const double mel_lo = hz_to_mel(125.0), mel_hi = hz_to_mel(7500.0);
  const double center = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (first_arg + 1) / 65.0);
  CHECK(std::fabs(center - 1000.0) <= 150.0);
}

TEST_CASE("logmel grows monotonically with input gain") {
  Rng rng(5);
  AudioClip c;
  c.sample_rate = 16000;
  c.samples.resize(8000);
  for (auto& v : c.samples) v = 0.1f * static_cast<float>(rng.normal());
  AudioClip louder = c;
  for (auto& v : louder.samples) v *= 3.0f;
  const Tensor a = logmel_spectrogram(c);
  const Tensor b = logmel_spectrogram(louder);
  for (size_t i = 0; i < a.size(); ++i) CHECK(b.values()[i] >= a.values()[i]);
}

TEST_CASE("stft magnitudes match a brute-force DFT within 1e-3") {
  const AudioClip tone = sine(700.0, 0.5, 16000, 0.4f);
  // reproduce one analysis frame by hand, windowed then zero-padded DFT
  const int m = 7;  // an arbitrary frame
  std::vector<double> frame(512, 0.0);
  for (int i = 0; i < 400; ++i) {
    const double w = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / 400));
    frame[static_cast<size_t>(i)] = static_cast<double>(tone.samples[static_cast<size_t>(m) * 160 + i]) * w;
  }
  const auto fast = rfft(frame, 512);
  for (size_t k = 0; k < fast.size(); k += 31) {
    std::complex<double> slow{0.0, 0.0};
    for (size_t i = 0; i < 512; ++i) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) * i / 512;
      slow += frame[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    CHECK(std::abs(fast[k] - slow) <= 1e-3 * std::max(1.0, std::abs(slow)));
  }
}

TEST_CASE("mel filterbank shape and coverage") {
  const Tensor fb = mel_filterbank();
  CHECK(fb.dim(0) == 64);
  CHECK(fb.dim(1) == 257);
  for (float v : fb.values()) CHECK(v >= 0.0f);
  for (int b = 0; b < 64; ++b) {
    double row = 0.0;
    for (int k = 0; k < 257; ++k) row += fb.at2(b, k);
    CHECK(row > 0.0);
  }
  // every bin strictly inside the band limits carries weight
  for (int k = 0; k < 257; ++k) {
    const double f = k * 16000.0 / 512.0;
    if (f <= 125.0 || f >= 7500.0) continue;
    double col = 0.0;
    for (int b = 0; b < 64; ++b) col += fb.at2(b, k);
    CHECK(col > 0.0f);
  }
}

TEST_CASE("patch partitioning") {
  Tensor spec({998, 64}, 0.5f);
  const auto patches = partition_patches(spec, 96, "clip-a");
  CHECK(patches.size() == 10);
  CHECK(patches.back().start_frame == 9 * 96);
  for (const auto& p : patches) {
    CHECK(p.frames.dim(0) == 96);
    CHECK(p.frames.dim(1) == 64);
    CHECK(p.clip_id == "clip-a");
  }

  Tensor exact({96, 64}, 0.0f);
  CHECK(partition_patches(exact, 96, "b").size() == 1);
  Tensor small({95, 64}, 0.0f);
  CHECK(partition_patches(small, 96, "c").empty());

  // content actually comes from the right rows
  Tensor ramp({192, 64});
  for (int t = 0; t < 192; ++t)
    for (int b = 0; b < 64; ++b) ramp.at2(t, b) = static_cast<float>(t);
  const auto two = partition_patches(ramp, 96, "d");
  REQUIRE(two.size() == 2);
  CHECK(two[1].frames.at2(0, 0) == 96.0f);
}

TEST_CASE("feature cache round-trips") {
  Rng rng(31);
  Tensor spec({120, 64});
  for (auto& v : spec.values()) v = static_cast<float>(rng.normal());
  const std::string path = tmp_path("adscreen_feat.bin");
  save_feature_cache(path, spec);
  const Tensor back = load_feature_cache(path);
  REQUIRE(back.shape() == spec.shape());
  CHECK(std::memcmp(back.data(), spec.data(), spec.size() * sizeof(float)) == 0);
  std::filesystem::remove(path);
}
