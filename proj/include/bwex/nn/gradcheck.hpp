#pragma once

// Central finite-difference audit of analytic gradients.
//
// The caller supplies the tensors to perturb together with their analytic
// gradients, and a loss closure that only runs forward passes. A coordinate
// whose perturbation flips any ReLU sign (detected through an optional
// signature closure) is skipped: the loss is not differentiable there.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bwex/nn/param_store.hpp"

namespace bwex::nn {

template <typename T>
struct GradTarget {
  std::string name;
  std::span<T> values;
  std::vector<double> analytic;
};

struct GradCheckOptions {
  double step = 1e-4;
  std::size_t max_coords = 0;  // 0 = every coordinate; otherwise a seeded sample
  std::uint64_t seed = 0;
  // Denominator floor as a fraction of the largest gradient magnitude across
  // all targets, so a target whose gradient is structurally zero (a conv bias
  // feeding batch norm) is judged against the module's gradient scale.
  double scale_floor = 1e-3;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const {
    double e = 0.0;
    for (const auto& x : entries) e = std::max(e, x.max_rel_error);
    return e;
  }
  bool passed(double tolerance) const {
    if (entries.empty()) return false;
    for (const auto& x : entries) {
      if (!(x.max_rel_error <= tolerance) || x.checked == 0) return false;
    }
    return true;
  }
  void merge(const GradCheckReport& other, const std::string& prefix = {}) {
    for (auto e : other.entries) {
      e.name = prefix + e.name;
      entries.push_back(std::move(e));
    }
  }
};

/// Relative error of one target: max |analytic - numeric| over the checked
/// coordinates divided by the largest magnitude of either, floored at
/// scale_floor times the largest analytic magnitude of any target (and 1e-12).
template <typename T>
GradCheckReport grad_check(std::vector<GradTarget<T>>& targets, const std::function<double()>& loss,
                           const std::function<std::uint64_t()>& signature = {}, const GradCheckOptions& opts = {}) {
  GradCheckReport report;
  std::mt19937_64 rng(opts.seed);
  loss();
  const std::uint64_t base_sig = signature ? signature() : 0;
  double global_scale = 0.0;
  for (const auto& target : targets) {
    for (double g : target.analytic) global_scale = std::max(global_scale, std::abs(g));
  }
  const double floor = std::max(1e-12, opts.scale_floor * global_scale);
  for (auto& target : targets) {
    GradCheckEntry entry{target.name};
    std::vector<std::size_t> coords(target.values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords && coords.size() > opts.max_coords) {
      for (std::size_t i = 0; i < opts.max_coords; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (coords.size() - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(opts.max_coords);
    }
    double max_diff = 0.0, max_mag = 0.0;
    for (std::size_t idx : coords) {
      const T saved = target.values[idx];
      target.values[idx] = static_cast<T>(saved + opts.step);
      const double plus = loss();
      const bool kink_plus = signature && signature() != base_sig;
      target.values[idx] = static_cast<T>(saved - opts.step);
      const double minus = loss();
      const bool kink_minus = signature && signature() != base_sig;
      target.values[idx] = saved;
      if (kink_plus || kink_minus) {
        ++entry.skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * opts.step);
      const double analytic = target.analytic[idx];
      max_diff = std::max(max_diff, std::abs(numeric - analytic));
      max_mag = std::max({max_mag, std::abs(numeric), std::abs(analytic)});
      ++entry.checked;
    }
    if (signature) loss();  // leave caches consistent with the restored values
    entry.max_rel_error = max_diff / std::max(max_mag, floor);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

/// Deterministic N(0, 1) fill via Box-Muller on the portable uniform draw.
template <typename T>
void fill_normal(std::span<T> v, std::mt19937_64& rng, double scale = 1.0) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double u1 = std::max(uniform01(rng), 1e-300);
    const double u2 = uniform01(rng);
    v[i] = static_cast<T>(scale * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2));
  }
}

}  // namespace bwex::nn
