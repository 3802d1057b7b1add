#pragma once

#include "fiberlab/types.hpp"

namespace fiberlab::fft {

// In-place transforms backed by FFTW. Plans are cached per (size, direction,
// alignment) and shared across threads; execution is reentrant.
void forward(CVec& v);  // unnormalized, kernel exp(-j 2 pi k n / N)
void inverse(CVec& v);  // normalized by 1/N

/// Signed bin index of FFT bin k for an n-point transform, in [-n/2, n/2).
inline long signed_bin(std::size_t k, std::size_t n)
{
  const long kk = static_cast<long>(k);
  const long nn = static_cast<long>(n);
  return kk < (nn + 1) / 2 ? kk : kk - nn;
}

/// Bin frequencies in Hz (FFT order).
std::vector<double> frequencies(std::size_t n, double sample_rate);

} // namespace fiberlab::fft
