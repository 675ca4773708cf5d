#pragma once

// 1D convolution (cross-correlation, no kernel flip) with "same"-style zero
// padding of (k-1)/2 on each side and stride 1 or 2, computed as
// im2col + GEMM over bounded column blocks.

#include <Eigen/Core>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bwex/nn/parallel.hpp"
#include "bwex/nn/param_store.hpp"
#include "bwex/nn/tensor.hpp"

namespace bwex::nn {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using BlockMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstBlockMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

constexpr std::size_t kColumnBlock = 512;

struct ConvGeometry {
  std::size_t batch, in_channels, out_channels, kernel, stride, pad, in_length, out_length;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride) {
  require_rank3(x, "conv1d input");
  if (w.rank() != 3) throw ShapeError("conv1d: weight must be (out, in, kernel), got " + to_string(w.shape()));
  const std::size_t k = w.dim(2);
  if (k % 2 == 0) throw ShapeError("conv1d: kernel axis must be odd, got " + std::to_string(k));
  if (stride != 1 && stride != 2) throw ShapeError("conv1d: stride must be 1 or 2, got " + std::to_string(stride));
  if (x.channels() != w.dim(1)) {
    throw ShapeError("conv1d: channel axis mismatch, input has " + std::to_string(x.channels()) +
                     " channels, weight expects " + std::to_string(w.dim(1)));
  }
  if (x.length() == 0) throw ShapeError("conv1d: length axis is empty");
  return {x.batch(), x.channels(), w.dim(0), k, stride, (k - 1) / 2, x.length(), (x.length() + stride - 1) / stride};
}

// col(ci * k + j, tt) = x[n, ci, (t0 + tt) * stride + j - pad], zero outside.
template <typename T>
void im2col(const Tensor<T>& x, std::size_t n, const ConvGeometry& g, std::size_t t0, std::size_t cols,
            std::vector<T>& col) {
  col.assign(g.in_channels * g.kernel * cols, T{0});
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    const T* src = x.row(n, ci);
    for (std::size_t j = 0; j < g.kernel; ++j) {
      T* dst = col.data() + (ci * g.kernel + j) * cols;
      for (std::size_t tt = 0; tt < cols; ++tt) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>((t0 + tt) * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
        if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(g.in_length)) dst[tt] = src[pos];
      }
    }
  }
}

template <typename T>
void col2im_add(const std::vector<T>& col, std::size_t n, const ConvGeometry& g, std::size_t t0, std::size_t cols,
                Tensor<T>& dx) {
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    T* dst = dx.row(n, ci);
    for (std::size_t j = 0; j < g.kernel; ++j) {
      const T* src = col.data() + (ci * g.kernel + j) * cols;
      for (std::size_t tt = 0; tt < cols; ++tt) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>((t0 + tt) * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
        if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(g.in_length)) dst[pos] += src[tt];
      }
    }
  }
}

}  // namespace detail

/// out[n, co, t] = b[co] + sum_{ci, j} w[co, ci, j] * x[n, ci, t * stride + j - pad].
/// Output length is ceil(d / stride).
template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride) {
  const auto g = detail::conv_geometry(x, w, stride);
  if (b.size() != g.out_channels) throw ShapeError("conv1d: bias length does not match output channel axis");
  Tensor<T> out({g.batch, g.out_channels, g.out_length});
  const auto wmat = detail::ConstMatMap<T>(w.data().data(), static_cast<Eigen::Index>(g.out_channels),
                                           static_cast<Eigen::Index>(g.in_channels * g.kernel));
  parallel_for(g.batch, [&](std::size_t n) {
    std::vector<T> col;
    for (std::size_t t0 = 0; t0 < g.out_length; t0 += detail::kColumnBlock) {
      const std::size_t cols = std::min(detail::kColumnBlock, g.out_length - t0);
      detail::im2col(x, n, g, t0, cols, col);
      const auto cmat = detail::ConstMatMap<T>(col.data(), static_cast<Eigen::Index>(g.in_channels * g.kernel),
                                               static_cast<Eigen::Index>(cols));
      detail::BlockMap<T> oblk(out.row(n, 0) + t0, static_cast<Eigen::Index>(g.out_channels),
                               static_cast<Eigen::Index>(cols), Eigen::OuterStride<>(static_cast<Eigen::Index>(g.out_length)));
      oblk.noalias() = wmat * cmat;
    }
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      T* o = out.row(n, co);
      for (std::size_t t = 0; t < g.out_length; ++t) o[t] += b[co];
    }
  });
  return out;
}

template <typename T>
struct Conv1dGrads {
  Tensor<T> dx;  // empty when not requested
  Tensor<T> dw;
  Tensor<T> db;
};

/// Exact adjoint of conv1d_forward. Weight and bias gradients are reduced
/// over the batch in sample order, independent of the thread count.
template <typename T>
Conv1dGrads<T> conv1d_backward(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, const Tensor<T>& dy,
                               bool want_dx = true) {
  const auto g = detail::conv_geometry(x, w, stride);
  if (dy.rank() != 3 || dy.batch() != g.batch || dy.channels() != g.out_channels || dy.length() != g.out_length) {
    throw ShapeError("conv1d backward: upstream gradient has shape " + to_string(dy.shape()) + ", expected " +
                     to_string({g.batch, g.out_channels, g.out_length}));
  }
  const std::size_t rows = g.in_channels * g.kernel;
  Conv1dGrads<T> grads;
  if (want_dx) grads.dx = Tensor<T>({g.batch, g.in_channels, g.in_length});
  std::vector<std::vector<T>> dw_parts(g.batch, std::vector<T>(g.out_channels * rows, T{0}));
  const auto wmat = detail::ConstMatMap<T>(w.data().data(), static_cast<Eigen::Index>(g.out_channels),
                                           static_cast<Eigen::Index>(rows));
  parallel_for(g.batch, [&](std::size_t n) {
    std::vector<T> col, dcol(rows * detail::kColumnBlock);
    detail::MatMap<T> dw_n(dw_parts[n].data(), static_cast<Eigen::Index>(g.out_channels), static_cast<Eigen::Index>(rows));
    for (std::size_t t0 = 0; t0 < g.out_length; t0 += detail::kColumnBlock) {
      const std::size_t cols = std::min(detail::kColumnBlock, g.out_length - t0);
      detail::im2col(x, n, g, t0, cols, col);
      const auto cmat = detail::ConstMatMap<T>(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      detail::ConstBlockMap<T> dyblk(dy.row(n, 0) + t0, static_cast<Eigen::Index>(g.out_channels),
                                     static_cast<Eigen::Index>(cols), Eigen::OuterStride<>(static_cast<Eigen::Index>(g.out_length)));
      dw_n.noalias() += dyblk * cmat.transpose();
      if (want_dx) {
        dcol.resize(rows * cols);
        detail::MatMap<T> dcmat(dcol.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        dcmat.noalias() = wmat.transpose() * dyblk;
        detail::col2im_add(dcol, n, g, t0, cols, grads.dx);
      }
    }
  });
  grads.dw = Tensor<T>(w.shape());
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t i = 0; i < grads.dw.size(); ++i) grads.dw[i] += dw_parts[n][i];
  }
  grads.db = Tensor<T>({g.out_channels});
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const T* d = dy.row(n, co);
      T s{0};
      for (std::size_t t = 0; t < g.out_length; ++t) s += d[t];
      grads.db[co] += s;
    }
  }
  return grads;
}

/// Convolution layer bound to weight/bias entries of a ParamStore.
template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParamStore<T>& store, const std::string& name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel, std::size_t stride)
      : weight_(&store.add(name + ".weight", {out_channels, in_channels, kernel})),
        bias_(&store.add(name + ".bias", {out_channels})),
        stride_(stride) {
    if (kernel % 2 == 0) throw ConfigError(name + ": kernel length must be odd");
    if (stride != 1 && stride != 2) throw ConfigError(name + ": stride must be 1 or 2");
  }

  void init(std::mt19937_64& rng) {
    const auto& s = weight_->value.shape();
    glorot_uniform(weight_->value, s[1] * s[2], s[0] * s[2], rng);
    bias_->value.fill(T{0});
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode = Mode::train) {
    auto out = conv1d_forward(x, weight_->value, bias_->value, stride_);
    if (mode == Mode::train) input_ = x;
    return out;
  }

  /// Accumulates weight/bias gradients; returns dx (empty if !want_dx).
  Tensor<T> backward(const Tensor<T>& dy, bool want_dx = true) {
    if (!input_) throw UsageError("conv1d '" + weight_->name + "': backward called without a cached train-mode forward");
    auto g = conv1d_backward(*input_, weight_->value, stride_, dy, want_dx);
    auto wg = weight_->grad();
    for (std::size_t i = 0; i < wg.size(); ++i) wg[i] += g.dw[i];
    auto bg = bias_->grad();
    for (std::size_t i = 0; i < bg.size(); ++i) bg[i] += g.db[i];
    weight_->mark_grad();
    bias_->mark_grad();
    input_.reset();
    return std::move(g.dx);
  }

  Parameter<T>& weight() { return *weight_; }
  Parameter<T>& bias() { return *bias_; }
  std::size_t stride() const noexcept { return stride_; }

 private:
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
  std::size_t stride_ = 1;
  std::optional<Tensor<T>> input_;
};

}  // namespace bwex::nn
