#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bwex/nn/param_store.hpp"
#include "bwex/nn/tensor.hpp"

namespace bwex::nn {

struct BatchNormSettings {
  double eps = 1e-5;
  double momentum = 0.99;  // running = momentum * running + (1 - momentum) * batch
};

/// Per-channel batch normalization over (batch, length).
///
/// Running statistics live in the ParamStore as non-trainable entries so they
/// travel with checkpoints. The first train-mode step copies the batch
/// statistics into them; later steps blend with `momentum`. Inference before
/// any train step is a usage error.
template <typename T>
class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  BatchNorm1d(ParamStore<T>& store, const std::string& name, std::size_t channels, BatchNormSettings s = {})
      : gamma_(&store.add(name + ".gamma", {channels})),
        beta_(&store.add(name + ".beta", {channels})),
        running_mean_(&store.add(name + ".running_mean", {channels}, false)),
        running_var_(&store.add(name + ".running_var", {channels}, false)),
        tracked_(&store.add(name + ".tracked", {1}, false)),
        settings_(s) {
    gamma_->value.fill(T{1});
    running_var_->value.fill(T{1});
  }

  void init() {
    gamma_->value.fill(T{1});
    beta_->value.fill(T{0});
    running_mean_->value.fill(T{0});
    running_var_->value.fill(T{1});
    tracked_->value.fill(T{0});
  }

  bool has_running_stats() const { return tracked_->value[0] > T{0}; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    require_rank3(x, "batchnorm");
    const std::size_t channels = x.channels();
    if (channels != gamma_->value.size()) {
      throw ShapeError("batchnorm '" + gamma_->name + "': channel axis is " + std::to_string(channels) + ", expected " +
                       std::to_string(gamma_->value.size()));
    }
    const std::size_t batch = x.batch(), length = x.length();
    const double count = static_cast<double>(batch * length);
    Tensor<T> y(x.shape());

    if (mode == Mode::infer) {
      if (!has_running_stats()) {
        throw UsageError("batchnorm '" + gamma_->name + "': inference requested before any training step");
      }
      cache_.reset();
      for (std::size_t c = 0; c < channels; ++c) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_->value[c]) + settings_.eps);
        const double scale = gamma_->value[c] * inv;
        const double shift = beta_->value[c] - running_mean_->value[c] * scale;
        for (std::size_t n = 0; n < batch; ++n) {
          const T* src = x.row(n, c);
          T* dst = y.row(n, c);
          for (std::size_t t = 0; t < length; ++t) dst[t] = static_cast<T>(src[t] * scale + shift);
        }
      }
      return y;
    }

    Cache cache;
    cache.xhat = Tensor<T>(x.shape());
    cache.inv_std.assign(channels, 0.0);
    const bool seed = !has_running_stats();
    for (std::size_t c = 0; c < channels; ++c) {
      double sum = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* src = x.row(n, c);
        for (std::size_t t = 0; t < length; ++t) sum += src[t];
      }
      const double mean = sum / count;
      double sq = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* src = x.row(n, c);
        for (std::size_t t = 0; t < length; ++t) {
          const double d = src[t] - mean;
          sq += d * d;
        }
      }
      const double var = sq / count;
      const double inv = 1.0 / std::sqrt(var + settings_.eps);
      cache.inv_std[c] = inv;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* src = x.row(n, c);
        T* xh = cache.xhat.row(n, c);
        T* dst = y.row(n, c);
        for (std::size_t t = 0; t < length; ++t) {
          const double v = (src[t] - mean) * inv;
          xh[t] = static_cast<T>(v);
          dst[t] = static_cast<T>(gamma_->value[c] * v + beta_->value[c]);
        }
      }
      const double m = settings_.momentum;
      if (seed) {
        running_mean_->value[c] = static_cast<T>(mean);
        running_var_->value[c] = static_cast<T>(var);
      } else {
        running_mean_->value[c] = static_cast<T>(m * running_mean_->value[c] + (1.0 - m) * mean);
        running_var_->value[c] = static_cast<T>(m * running_var_->value[c] + (1.0 - m) * var);
      }
    }
    tracked_->value[0] += T{1};
    cache_ = std::move(cache);
    return y;
  }

  /// Exact backward of the last train-mode forward, through the batch statistics.
  Tensor<T> backward(const Tensor<T>& dy) {
    require_rank3(dy, "batchnorm backward");
    const std::size_t channels = dy.channels(), batch = dy.batch(), length = dy.length();
    if (!cache_) throw UsageError("batchnorm '" + gamma_->name + "': backward called without a cached train-mode forward");
    Tensor<T> dx(dy.shape());
    auto dgamma = gamma_->grad();
    auto dbeta = beta_->grad();
    const auto& xhat = cache_->xhat;
    const double count = static_cast<double>(batch * length);
    for (std::size_t c = 0; c < channels; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* d = dy.row(n, c);
        const T* xh = xhat.row(n, c);
        for (std::size_t t = 0; t < length; ++t) {
          sum_dy += d[t];
          sum_dy_xhat += static_cast<double>(d[t]) * xh[t];
        }
      }
      dgamma[c] += static_cast<T>(sum_dy_xhat);
      dbeta[c] += static_cast<T>(sum_dy);
      const double g = gamma_->value[c];
      const double k = g * cache_->inv_std[c] / count;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* d = dy.row(n, c);
        const T* xh = xhat.row(n, c);
        T* out = dx.row(n, c);
        for (std::size_t t = 0; t < length; ++t) {
          out[t] = static_cast<T>(k * (count * d[t] - sum_dy - xh[t] * sum_dy_xhat));
        }
      }
    }
    gamma_->mark_grad();
    beta_->mark_grad();
    cache_.reset();
    return dx;
  }

  Parameter<T>& gamma() { return *gamma_; }
  Parameter<T>& beta() { return *beta_; }
  Parameter<T>& running_mean() { return *running_mean_; }
  Parameter<T>& running_var() { return *running_var_; }

 private:
  struct Cache {
    Tensor<T> xhat;
    std::vector<double> inv_std;
  };

  Parameter<T>* gamma_ = nullptr;
  Parameter<T>* beta_ = nullptr;
  Parameter<T>* running_mean_ = nullptr;
  Parameter<T>* running_var_ = nullptr;
  Parameter<T>* tracked_ = nullptr;
  BatchNormSettings settings_;
  std::optional<Cache> cache_;
};

}  // namespace bwex::nn
