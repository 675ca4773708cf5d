#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>

#include "bwex/dsp/stft.hpp"
#include "bwex/error.hpp"

namespace bwex {

inline constexpr std::size_t kLsdFrame = 2048;

/// 10 log10(||y||^2 / ||x - y||^2) in dB; x is the approximation, y the
/// reference. Exact reconstruction gives +infinity.
inline double snr(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw LengthError("snr: lengths differ (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sig += y[i] * y[i];
    err += (x[i] - y[i]) * (x[i] - y[i]);
  }
  if (sig == 0.0) throw DomainError("snr: reference signal is all zeros");
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sig / err);
}

/// Log-spectral distance: frames of 2048 with hop 2048 and a Hann window,
/// X = log10 max(|S|^2, 1e-10); RMS over the 1025 bins of each frame, mean
/// over frames.
inline double lsd(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw LengthError("lsd: lengths differ (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < kLsdFrame) throw LengthError("lsd: need at least " + std::to_string(kLsdFrame) + " samples, got " + std::to_string(x.size()));
  const auto a = log_power(stft(x, kLsdFrame, kLsdFrame, Window::hann));
  const auto b = log_power(stft(y, kLsdFrame, kLsdFrame, Window::hann));
  double total = 0.0;
  for (std::size_t l = 0; l < a.rows; ++l) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double d = a(l, k) - b(l, k);
      s += d * d;
    }
    total += std::sqrt(s / static_cast<double>(a.cols));
  }
  return total / static_cast<double>(a.rows);
}

/// "inf" for +infinity, otherwise fixed with `digits` decimals.
inline std::string format_metric(double v, int digits = 2) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace bwex
