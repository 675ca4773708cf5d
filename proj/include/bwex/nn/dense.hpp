#pragma once

#include <Eigen/Core>
#include <optional>
#include <random>
#include <string>

#include "bwex/nn/param_store.hpp"
#include "bwex/nn/tensor.hpp"

namespace bwex::nn {

/// Fully connected layer on (batch, features) tensors: y = x W^T + b.
template <typename T>
class Dense {
 public:
  using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Dense() = default;
  Dense(ParamStore<T>& store, const std::string& name, std::size_t in_features, std::size_t out_features)
      : weight_(&store.add(name + ".weight", {out_features, in_features})),
        bias_(&store.add(name + ".bias", {out_features})) {}

  void init(std::mt19937_64& rng) {
    glorot_uniform(weight_->value, weight_->value.dim(1), weight_->value.dim(0), rng);
    bias_->value.fill(T{0});
  }

  std::size_t in_features() const { return weight_->value.dim(1); }
  std::size_t out_features() const { return weight_->value.dim(0); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode = Mode::train) {
    if (x.rank() != 2 || x.dim(1) != in_features()) {
      throw ShapeError("dense '" + weight_->name + "': expected (batch, " + std::to_string(in_features()) + "), got " +
                       to_string(x.shape()));
    }
    const auto rows = static_cast<Eigen::Index>(x.dim(0));
    Tensor<T> y({x.dim(0), out_features()});
    Eigen::Map<const RowMatrix> xm(x.data().data(), rows, static_cast<Eigen::Index>(in_features()));
    Eigen::Map<const RowMatrix> wm(weight_->value.data().data(), static_cast<Eigen::Index>(out_features()),
                                   static_cast<Eigen::Index>(in_features()));
    Eigen::Map<RowMatrix> ym(y.data().data(), rows, static_cast<Eigen::Index>(out_features()));
    ym.noalias() = xm * wm.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < out_features(); ++c) ym(r, static_cast<Eigen::Index>(c)) += bias_->value[c];
    }
    if (mode == Mode::train) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool want_dx = true) {
    if (!input_) throw UsageError("dense '" + weight_->name + "': backward called without a cached train-mode forward");
    const auto rows = static_cast<Eigen::Index>(input_->dim(0));
    const auto in = static_cast<Eigen::Index>(in_features()), out = static_cast<Eigen::Index>(out_features());
    if (dy.rank() != 2 || static_cast<Eigen::Index>(dy.dim(0)) != rows || static_cast<Eigen::Index>(dy.dim(1)) != out) {
      throw ShapeError("dense backward: upstream gradient has shape " + to_string(dy.shape()));
    }
    Eigen::Map<const RowMatrix> xm(input_->data().data(), rows, in);
    Eigen::Map<const RowMatrix> dym(dy.data().data(), rows, out);
    Eigen::Map<RowMatrix> dwm(weight_->grad().data(), out, in);
    dwm.noalias() += dym.transpose() * xm;
    auto bg = bias_->grad();
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < out; ++c) bg[static_cast<std::size_t>(c)] += dym(r, c);
    }
    weight_->mark_grad();
    bias_->mark_grad();
    Tensor<T> dx;
    if (want_dx) {
      dx = Tensor<T>({input_->dim(0), in_features()});
      Eigen::Map<const RowMatrix> wm(weight_->value.data().data(), out, in);
      Eigen::Map<RowMatrix> dxm(dx.data().data(), rows, in);
      dxm.noalias() = dym * wm;
    }
    input_.reset();
    return dx;
  }

  Parameter<T>& weight() { return *weight_; }
  Parameter<T>& bias() { return *bias_; }

 private:
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
  std::optional<Tensor<T>> input_;
};

}  // namespace bwex::nn
