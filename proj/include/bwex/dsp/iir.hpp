#pragma once

// Chebyshev type I low-pass design (analog prototype + pre-warped bilinear
// transform) and zero-phase forward-backward filtering.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "bwex/error.hpp"

namespace bwex {

struct IIRFilter {
  std::vector<double> b;  // feed-forward
  std::vector<double> a;  // feedback, a[0] == 1
  int order = 0;

  /// Complex response at normalized frequency w in [0, 1] (1 == Nyquist).
  std::complex<double> response(double w) const {
    const double omega = std::numbers::pi * w;
    std::complex<double> num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) num += b[k] * std::polar(1.0, -omega * static_cast<double>(k));
    for (std::size_t k = 0; k < a.size(); ++k) den += a[k] * std::polar(1.0, -omega * static_cast<double>(k));
    return num / den;
  }

  double gain_db(double w) const { return 20.0 * std::log10(std::abs(response(w))); }

  /// Roots of the feedback polynomial (companion-matrix eigenvalues).
  std::vector<std::complex<double>> poles() const {
    const std::size_t n = a.size() - 1;
    if (n == 0) return {};
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) companion(0, static_cast<Eigen::Index>(j)) = -a[j + 1] / a[0];
    for (std::size_t i = 1; i < n; ++i) companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
    std::vector<std::complex<double>> out;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(es.eigenvalues()[i]);
    return out;
  }

  bool is_stable() const {
    for (const auto& p : poles()) {
      if (!(std::abs(p) < 1.0)) return false;
    }
    return true;
  }
};

namespace detail {

// Real coefficients of prod_i (z - roots[i]), highest power first.
inline std::vector<double> poly_from_roots(std::span<const std::complex<double>> roots) {
  std::vector<std::complex<double>> c{1.0};
  for (const auto& r : roots) {
    std::vector<std::complex<double>> next(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= c[i] * r;
    }
    c = std::move(next);
  }
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

}  // namespace detail

/// Digital Chebyshev type I low-pass. `cutoff` is the passband edge as a
/// fraction of Nyquist; the gain there is exactly -ripple_db.
inline IIRFilter design_cheby1_lowpass(int order, double ripple_db, double cutoff) {
  if (order < 1) throw DomainError("cheby1: order must be >= 1");
  if (!(ripple_db > 0.0)) throw DomainError("cheby1: ripple must be positive");
  if (!(cutoff > 0.0 && cutoff < 1.0)) throw DomainError("cheby1: cutoff must lie in (0, 1)");

  const double eps = std::sqrt(std::pow(10.0, 0.1 * ripple_db) - 1.0);
  const double mu = std::asinh(1.0 / eps) / order;

  std::vector<std::complex<double>> analog;
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order);
    analog.emplace_back(-std::sinh(mu) * std::sin(theta), std::cosh(mu) * std::cos(theta));
  }
  std::complex<double> gain = 1.0;
  for (const auto& p : analog) gain *= -p;
  double k_analog = gain.real();
  if (order % 2 == 0) k_analog /= std::sqrt(1.0 + eps * eps);

  // Pre-warp so the digital band edge lands on `cutoff`, with fs = 2.
  constexpr double fs2 = 4.0;
  const double warped = fs2 * std::tan(std::numbers::pi * cutoff / 2.0);
  for (auto& p : analog) p *= warped;
  k_analog *= std::pow(warped, order);

  std::vector<std::complex<double>> poles, zeros(static_cast<std::size_t>(order), -1.0);
  std::complex<double> denom = 1.0;
  for (const auto& p : analog) {
    poles.push_back((fs2 + p) / (fs2 - p));
    denom *= fs2 - p;
  }
  const double k_digital = k_analog * (1.0 / denom).real();

  IIRFilter f;
  f.order = order;
  f.b = detail::poly_from_roots(zeros);
  for (auto& c : f.b) c *= k_digital;
  f.a = detail::poly_from_roots(poles);
  return f;
}

/// Rescales the feed-forward taps so the DC gain is exactly 1.
inline IIRFilter with_unit_dc_gain(IIRFilter f) {
  double sb = 0.0, sa = 0.0;
  for (double c : f.b) sb += c;
  for (double c : f.a) sa += c;
  const double scale = sa / sb;
  for (auto& c : f.b) c *= scale;
  return f;
}

/// Transposed direct-form II filtering with optional initial state (size order).
inline std::vector<double> lfilter(const IIRFilter& f, std::span<const double> x, std::vector<double> state = {}) {
  const std::size_t n = std::max(f.a.size(), f.b.size());
  std::vector<double> b(f.b), a(f.a);
  b.resize(n, 0.0);
  a.resize(n, 0.0);
  state.resize(n - 1, 0.0);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double yi = b[0] * xi + (n > 1 ? state[0] : 0.0);
    for (std::size_t j = 0; j + 1 < n - 1; ++j) state[j] = b[j + 1] * xi + state[j + 1] - a[j + 1] * yi;
    if (n > 1) state[n - 2] = b[n - 1] * xi - a[n - 1] * yi;
    y[i] = yi;
  }
  return y;
}

/// Steady-state initial conditions for a unit step input.
inline std::vector<double> lfilter_zi(const IIRFilter& f) {
  const std::size_t n = std::max(f.a.size(), f.b.size());
  std::vector<double> b(f.b), a(f.a);
  b.resize(n, 0.0);
  a.resize(n, 0.0);
  const auto m = static_cast<Eigen::Index>(n - 1);
  if (m == 0) return {};
  // (I - C^T) zi = b[1:] - a[1:] b[0], C the companion matrix of a.
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index i = 0; i < m; ++i) lhs(i, 0) += a[static_cast<std::size_t>(i) + 1];
  for (Eigen::Index i = 0; i + 1 < m; ++i) lhs(i, i + 1) -= 1.0;
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) rhs(i) = b[static_cast<std::size_t>(i) + 1] - a[static_cast<std::size_t>(i) + 1] * b[0];
  Eigen::VectorXd zi = lhs.fullPivLu().solve(rhs);
  return {zi.data(), zi.data() + m};
}

/// Zero-phase forward-backward filtering with odd-reflection edge padding of
/// 3 * order samples and steady-state initial conditions.
inline std::vector<double> filtfilt(const IIRFilter& f, std::span<const double> x) {
  const std::size_t pad = 3 * static_cast<std::size_t>(f.order);
  if (x.size() <= pad) {
    throw LengthError("filtfilt: input length " + std::to_string(x.size()) + " must exceed " + std::to_string(pad));
  }
  const std::size_t n = x.size();
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = lfilter_zi(f);
  auto scaled = [&](double v) {
    std::vector<double> s(zi);
    for (auto& z : s) z *= v;
    return s;
  };
  auto fwd = lfilter(f, ext, scaled(ext.front()));
  std::reverse(fwd.begin(), fwd.end());
  auto bwd = lfilter(f, fwd, scaled(fwd.front()));
  std::reverse(bwd.begin(), bwd.end());
  return {bwd.begin() + static_cast<std::ptrdiff_t>(pad), bwd.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

}  // namespace bwex
