#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bwex/audio/wav.hpp"
#include "bwex/dsp/resample.hpp"
#include "bwex/model/config.hpp"
#include "bwex/nn/activation.hpp"
#include "bwex/nn/batchnorm.hpp"
#include "bwex/nn/conv1d.hpp"
#include "bwex/nn/param_store.hpp"
#include "bwex/nn/reshape.hpp"

namespace bwex {

/// Residual 1D encoder-decoder with subpixel upsampling.
///
///   down b:  conv(stride 2) -> BN -> ReLU                    halves length
///   up b:    conv(stride 1) -> BN -> ReLU -> shuffle -> [concat down B-b]
///   final:   conv(1 filter), linear; plus the input when the residual is on
///
/// The model is move-only: layers hold references into its ParamStore.
template <typename T>
class AudioUNet {
 public:
  AudioUNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t blocks = static_cast<std::size_t>(cfg_.blocks);
    std::size_t in = 1;
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::string name = "down" + std::to_string(b + 1);
      down_.push_back({nn::Conv1d<T>(store_, name + ".conv", in, cfg_.filters_down[b], cfg_.kernel_down[b], 2),
                       nn::BatchNorm1d<T>(store_, name + ".bn", cfg_.filters_down[b]), nn::ReLU<T>()});
      in = cfg_.filters_down[b];
    }
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::string name = "up" + std::to_string(b + 1);
      up_.push_back({nn::Conv1d<T>(store_, name + ".conv", in, cfg_.filters_up[b], cfg_.kernel_up[b], 1),
                     nn::BatchNorm1d<T>(store_, name + ".bn", cfg_.filters_up[b]), nn::ReLU<T>()});
      in = cfg_.filters_up[b] / 2;
      if (cfg_.use_skip_concat && b + 1 < blocks) in += cfg_.filters_down[blocks - 2 - b];
      up_out_channels_.push_back(in);
    }
    final_ = nn::Conv1d<T>(store_, "final.conv", in, 1, cfg_.final_kernel, 1);
    initialize(seed);
  }

  AudioUNet(AudioUNet&&) noexcept = default;
  AudioUNet& operator=(AudioUNet&&) noexcept = default;

  /// Glorot-uniform conv weights, zero biases, identity batch norm.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& blk : down_) {
      blk.conv.init(rng);
      blk.bn.init();
    }
    for (auto& blk : up_) {
      blk.conv.init(rng);
      blk.bn.init();
    }
    final_.init(rng);
  }

  /// Zeroes the final layer; with the residual on, the model is then the identity.
  void zero_final_layer() {
    final_.weight().value.fill(T{0});
    final_.bias().value.fill(T{0});
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  nn::ParamStore<T>& params() noexcept { return store_; }
  const nn::ParamStore<T>& params() const noexcept { return store_; }
  std::size_t parameter_count() const { return store_.trainable_count(); }

  /// x: (N, 1, d) with d divisible by 2^B. Returns (N, 1, d).
  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode) {
    nn::require_rank3(x, "audiounet");
    if (x.channels() != 1) throw ShapeError("audiounet: input channel axis must be 1, got " + std::to_string(x.channels()));
    if (x.length() == 0 || x.length() % cfg_.length_multiple() != 0) {
      throw ShapeError("audiounet: length axis " + std::to_string(x.length()) + " is not divisible by " +
                       std::to_string(cfg_.length_multiple()));
    }
    const std::size_t blocks = down_.size();
    std::vector<nn::Tensor<T>> down_out(blocks);
    const nn::Tensor<T>* h = &x;
    for (std::size_t b = 0; b < blocks; ++b) {
      auto& blk = down_[b];
      down_out[b] = blk.relu.forward(blk.bn.forward(blk.conv.forward(*h, mode), mode), mode);
      h = &down_out[b];
    }
    nn::Tensor<T> u = down_out.back();
    for (std::size_t b = 0; b < blocks; ++b) {
      auto& blk = up_[b];
      u = nn::subpixel_shuffle_1d(blk.relu.forward(blk.bn.forward(blk.conv.forward(u, mode), mode), mode));
      if (cfg_.use_skip_concat && b + 1 < blocks) u = nn::concat_channels(u, down_out[blocks - 2 - b]);
    }
    nn::Tensor<T> y = final_.forward(u, mode);
    if (cfg_.use_additive_residual) {
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
    }
    return y;
  }

  /// Backpropagates dL/d(output) from the last train-mode forward. Parameter
  /// gradients accumulate in the store; returns dL/d(input) when requested.
  nn::Tensor<T> backward(const nn::Tensor<T>& dy, bool want_input_grad = false) {
    const std::size_t blocks = down_.size();
    nn::Tensor<T> g = final_.backward(dy);
    std::vector<nn::Tensor<T>> skip_grads(blocks);
    for (std::size_t b = blocks; b-- > 0;) {
      auto& blk = up_[b];
      if (cfg_.use_skip_concat && b + 1 < blocks) {
        auto [g_up, g_skip] = nn::split_channels(g, cfg_.filters_up[b] / 2);
        skip_grads[blocks - 2 - b] = std::move(g_skip);
        g = std::move(g_up);
      }
      g = blk.conv.backward(blk.bn.backward(blk.relu.backward(nn::subpixel_unshuffle_1d(g))));
    }
    for (std::size_t b = blocks; b-- > 0;) {
      if (!skip_grads[b].empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += skip_grads[b][i];
      }
      auto& blk = down_[b];
      g = blk.conv.backward(blk.bn.backward(blk.relu.backward(g)), b > 0 || want_input_grad);
    }
    if (!want_input_grad) return {};
    if (cfg_.use_additive_residual) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
    }
    return g;
  }

  /// Combined ReLU sign-pattern hash of the last forward pass.
  std::uint64_t activation_signature() const {
    std::uint64_t h = 0;
    for (const auto& blk : down_) h = h * 31 + blk.relu.signature();
    for (const auto& blk : up_) h = h * 31 + blk.relu.signature();
    return h;
  }

 private:
  struct Block {
    nn::Conv1d<T> conv;
    nn::BatchNorm1d<T> bn;
    nn::ReLU<T> relu;
  };

  ModelConfig cfg_;
  nn::ParamStore<T> store_;
  std::vector<Block> down_;
  std::vector<Block> up_;
  nn::Conv1d<T> final_;
  std::vector<std::size_t> up_out_channels_;
};

}  // namespace bwex
