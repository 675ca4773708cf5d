#pragma once

#include <cstdint>
#include <vector>

#include "bwex/nn/tensor.hpp"

namespace bwex::nn {

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

/// Subgradient at exactly 0 is taken as 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  if (x.shape() != dy.shape()) throw ShapeError("relu backward: shape mismatch");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
  return dx;
}

/// ReLU layer. Keeps the sign pattern of its last input, and an FNV-1a hash
/// of it that gradient audits use to detect kink crossings.
template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode = Mode::train) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < x.size(); ++i) {
      h ^= x[i] > T{0} ? 1u : 0u;
      h *= 1099511628211ull;
    }
    signature_ = h;
    if (mode == Mode::train) {
      mask_.assign(x.size(), 0);
      for (std::size_t i = 0; i < x.size(); ++i) mask_[i] = x[i] > T{0};
      shape_ = x.shape();
    }
    return relu_forward(x);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (mask_.size() != dy.size() || shape_ != dy.shape()) throw UsageError("relu: backward without a matching forward");
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = mask_[i] ? dy[i] : T{0};
    mask_.clear();
    return dx;
  }

  std::uint64_t signature() const noexcept { return signature_; }

 private:
  std::vector<std::uint8_t> mask_;
  Shape shape_;
  std::uint64_t signature_ = 0;
};

}  // namespace bwex::nn
