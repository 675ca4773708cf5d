#pragma once

#include <span>
#include <vector>

#include "bwex/audio/wav.hpp"
#include "bwex/dsp/iir.hpp"
#include "bwex/error.hpp"

namespace bwex {

struct AntiAliasSettings {
  int order = 8;
  double ripple_db = 0.05;
  double cutoff_fraction = 0.8;  // of the post-decimation Nyquist
};

/// Unit-DC-gain Chebyshev-I low-pass used before subsampling by r.
inline IIRFilter anti_alias_filter(int r, const AntiAliasSettings& s = {}) {
  if (r < 2) throw DomainError("anti_alias_filter: ratio must be >= 2");
  return with_unit_dc_gain(design_cheby1_lowpass(s.order, s.ripple_db, s.cutoff_fraction / r));
}

/// Keeps every r-th sample starting at index 0, optionally after zero-phase
/// anti-alias filtering. Without the filter the result aliases.
inline std::vector<double> decimate(std::span<const double> x, int r, bool use_lpf) {
  if (r < 2) throw DomainError("decimate: ratio must be >= 2, got " + std::to_string(r));
  if (x.size() < static_cast<std::size_t>(r)) throw LengthError("decimate: input shorter than ratio");
  std::vector<double> filtered;
  std::span<const double> src = x;
  if (use_lpf) {
    filtered = filtfilt(anti_alias_filter(r), x);
    src = filtered;
  }
  std::vector<double> out;
  out.reserve((x.size() + r - 1) / r);
  for (std::size_t i = 0; i < src.size(); i += static_cast<std::size_t>(r)) out.push_back(src[i]);
  return out;
}

inline AudioBuffer decimate(const AudioBuffer& x, int r, bool use_lpf) {
  if (r < 2) throw DomainError("decimate: ratio must be >= 2, got " + std::to_string(r));
  if (x.sample_rate % r != 0) {
    throw DomainError("decimate: rate " + std::to_string(x.sample_rate) + " not divisible by " + std::to_string(r));
  }
  return {decimate(std::span<const double>(x.samples), r, use_lpf), x.sample_rate / r};
}

/// Natural cubic spline through (i, x[i]) sampled at j / r for
/// j = 0 .. r*len-1. Points past the last node reuse the last piece.
inline std::vector<double> spline_upscale(std::span<const double> x, int r) {
  if (r < 2) throw DomainError("spline_upscale: ratio must be >= 2");
  const std::size_t n = x.size();
  if (n < 4) throw LengthError("spline_upscale: need at least 4 samples, got " + std::to_string(n));

  // Second derivatives m with m[0] = m[n-1] = 0; interior rows are
  // m[i-1] + 4 m[i] + m[i+1] = 6 (x[i+1] - 2 x[i] + x[i-1]). Thomas algorithm.
  std::vector<double> m(n, 0.0), cp(n, 0.0), dp(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double rhs = 6.0 * (x[i + 1] - 2.0 * x[i] + x[i - 1]);
    const double denom = 4.0 - cp[i - 1];
    cp[i] = 1.0 / denom;
    dp[i] = (rhs - dp[i - 1]) / denom;
  }
  for (std::size_t i = n - 2; i >= 1; --i) m[i] = dp[i] - cp[i] * m[i + 1];

  std::vector<double> out(n * static_cast<std::size_t>(r));
  for (std::size_t j = 0; j < out.size(); ++j) {
    const std::size_t node = j / static_cast<std::size_t>(r);
    const std::size_t piece = std::min(node, n - 2);
    const double t = static_cast<double>(j) / r - static_cast<double>(piece);
    const double u = 1.0 - t;
    out[j] = u * x[piece] + t * x[piece + 1] + ((u * u * u - u) * m[piece] + (t * t * t - t) * m[piece + 1]) / 6.0;
  }
  return out;
}

inline AudioBuffer spline_upscale(const AudioBuffer& x, int r) {
  return {spline_upscale(std::span<const double>(x.samples), r), x.sample_rate * r};
}

}  // namespace bwex
