#pragma once

#include <cmath>

#include "bwex/nn/tensor.hpp"

namespace bwex::nn {

enum class LossMode {
  mean_sq,     // mean over all elements of (pred - target)^2; the training loss
  root_sum,   // (1/n) * sqrt(sum_i ||y_i - f(x_i)||^2) over the n batch items; reporting only
};

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor<T> grad;  // d value / d pred
};

template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target, LossMode mode = LossMode::mean_sq) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction shape " + to_string(pred.shape()) + " vs target " + to_string(target.shape()));
  }
  LossResult<T> r;
  r.grad = Tensor<T>(pred.shape());
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum_sq += d * d;
  }
  if (mode == LossMode::mean_sq) {
    const double count = static_cast<double>(pred.size());
    r.value = sum_sq / count;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      r.grad[i] = static_cast<T>(2.0 * (static_cast<double>(pred[i]) - static_cast<double>(target[i])) / count);
    }
  } else {
    const double n = static_cast<double>(pred.rank() == 1 ? 1 : pred.dim(0));
    const double root = std::sqrt(sum_sq);
    r.value = root / n;
    if (root > 0.0) {
      for (std::size_t i = 0; i < pred.size(); ++i) {
        r.grad[i] = static_cast<T>((static_cast<double>(pred[i]) - static_cast<double>(target[i])) / (n * root));
      }
    }
  }
  return r;
}

}  // namespace bwex::nn
