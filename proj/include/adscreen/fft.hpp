#pragma once

#include <complex>
#include <vector>

namespace adscreen {

// In-place iterative radix-2 FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& x, bool inverse = false);

// Real input -> first n/2+1 bins of the complex spectrum.
std::vector<std::complex<double>> rfft(const std::vector<double>& x, size_t n);

// Inverse of rfft for a real signal of length n: expects n/2+1 bins.
std::vector<double> irfft(const std::vector<std::complex<double>>& bins, size_t n);

}  // namespace adscreen
