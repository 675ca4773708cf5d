#pragma once

#include <cmath>

#include "bwex/nn/param_store.hpp"

namespace bwex::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected ADAM update of every trainable parameter, then zeroes the
/// gradients. Every trainable parameter must have received a gradient.
template <typename T>
void adam_step(ParamStore<T>& store, const AdamConfig& cfg) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    if (p.trainable && !p.grad_ready) throw UsageError("adam_step: parameter '" + p.name + "' has no gradient");
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    if (!p.trainable) continue;
    p.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
    auto values = p.value.data();
    auto grad = p.value.grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad[j];
      const double m = cfg.beta1 * p.adam_m[j] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * p.adam_v[j] + (1.0 - cfg.beta2) * g * g;
      p.adam_m[j] = static_cast<T>(m);
      p.adam_v[j] = static_cast<T>(v);
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      values[j] = static_cast<T>(values[j] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
  store.zero_grad();
}

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParamStore<T>& store, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store[i].trainable) continue;
    for (T g : store[i].value.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (!store[i].trainable) continue;
      for (T& g : store[i].value.grad()) g = static_cast<T>(g * s);
    }
  }
  return norm;
}

}  // namespace bwex::nn
