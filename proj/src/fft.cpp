#include "adscreen/fft.hpp"

#include <cmath>

#include "adscreen/error.hpp"

namespace adscreen {

void fft_inplace(std::vector<std::complex<double>>& x, bool inverse) {
  const size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0) throw Error("fft: size must be a power of two");
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& v : x) v /= static_cast<double>(n);
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x, size_t n) {
  std::vector<std::complex<double>> buf(n, {0.0, 0.0});
  const size_t m = std::min(x.size(), n);
  for (size_t i = 0; i < m; ++i) buf[i] = {x[i], 0.0};
  fft_inplace(buf);
  buf.resize(n / 2 + 1);
  return buf;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& bins, size_t n) {
  if (bins.size() != n / 2 + 1) throw Error("irfft: expected n/2+1 bins");
  std::vector<std::complex<double>> full(n);
  for (size_t i = 0; i < bins.size(); ++i) full[i] = bins[i];
  for (size_t i = bins.size(); i < n; ++i) full[i] = std::conj(full[n - i]);
  fft_inplace(full, /*inverse=*/true);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = full[i].real();
  return out;
}

}  // namespace adscreen
