#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "bwex/error.hpp"

namespace bwex {

constexpr bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 FFT. `inverse` applies the conjugate transform
/// and the 1/n scale.
inline void fft_inplace(std::span<std::complex<double>> data, bool inverse = false) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) throw DomainError("fft: length " + std::to_string(n) + " is not a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles computed directly rather than by recurrence to keep
      // round-off at the 1e-15 level for long transforms.
      const std::complex<double> w(std::cos(ang * k), std::sin(ang * k));
      for (std::size_t i = 0; i < n; i += len) {
        const auto u = data[i + k];
        const auto v = data[i + k + half] * w;
        data[i + k] = u + v;
        data[i + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    const double s = 1.0 / static_cast<double>(n);
    for (auto& z : data) z *= s;
  }
}

/// One-sided spectrum (n/2 + 1 bins) of a real frame.
inline std::vector<std::complex<double>> rfft(std::span<const double> frame) {
  std::vector<std::complex<double>> buf(frame.begin(), frame.end());
  fft_inplace(buf);
  buf.resize(frame.size() / 2 + 1);
  return buf;
}

/// Inverse of rfft for a frame of length n (Hermitian symmetry assumed).
inline std::vector<double> irfft(std::span<const std::complex<double>> half, std::size_t n) {
  if (half.size() != n / 2 + 1) throw ShapeError("irfft: expected n/2+1 bins");
  std::vector<std::complex<double>> buf(n);
  for (std::size_t k = 0; k < half.size(); ++k) buf[k] = half[k];
  for (std::size_t k = 1; k < n / 2; ++k) buf[n - k] = std::conj(half[k]);
  buf[0] = {half[0].real(), 0.0};
  buf[n / 2] = {half[n / 2].real(), 0.0};
  fft_inplace(buf, true);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
  return out;
}

}  // namespace bwex
