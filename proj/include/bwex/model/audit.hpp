#pragma once

// Finite-difference audit of every layer's backward pass and of a small
// composed network, in double precision.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bwex/model/audio_unet.hpp"
#include "bwex/nn/activation.hpp"
#include "bwex/nn/batchnorm.hpp"
#include "bwex/nn/conv1d.hpp"
#include "bwex/nn/dense.hpp"
#include "bwex/nn/gradcheck.hpp"
#include "bwex/nn/loss.hpp"
#include "bwex/nn/reshape.hpp"

namespace bwex {

struct AuditResult {
  std::string layer;
  std::size_t cases = 0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;

  bool passed(double tol) const { return cases > 0 && checked > 0 && max_rel_error <= tol; }
};

struct AuditOptions {
  std::size_t cases = 20;
  std::uint64_t seed = 0;
  double step = 1e-4;
};

/// Tiny two-block model used by the composed-network audit: length 64, at
/// most 8 channels anywhere.
inline ModelConfig audit_model_config() {
  ModelConfig c;
  c.blocks = 2;
  c.patch_length = 64;
  c.filters_down = {4, 8};
  c.kernel_down = {9, 5};
  c.final_kernel = 9;
  c.mirror_up();
  return c;
}

namespace detail {

using TD = nn::Tensor<double>;

inline TD audit_tensor(nn::Shape s, std::mt19937_64& rng, double scale = 1.0) {
  TD t(std::move(s));
  nn::fill_normal(t.data(), rng, scale);
  return t;
}

inline double audit_dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> audit_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

inline void accumulate(AuditResult& r, const nn::GradCheckReport& rep) {
  ++r.cases;
  for (const auto& e : rep.entries) {
    r.max_rel_error = std::max(r.max_rel_error, e.max_rel_error);
    r.checked += e.checked;
    r.skipped += e.skipped;
  }
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); }

}  // namespace detail

/// Audits conv1d, batch norm, ReLU, subpixel shuffle, concat, both loss
/// modes, dense, one up block and the tiny composed network.
inline std::vector<AuditResult> run_gradient_audit(const AuditOptions& opts = {}) {
  using detail::audit_dot;
  using detail::audit_tensor;
  using detail::audit_vec;
  using detail::pick;
  using detail::TD;
  using nn::GradTarget;
  using nn::Mode;
  const nn::GradCheckOptions gc{.step = opts.step};
  std::vector<AuditResult> out;

  {
    AuditResult r{"conv1d"};
    for (std::size_t i = 0; i < opts.cases; ++i) {
      std::mt19937_64 rng(opts.seed * 1000 + i);
      const std::size_t n = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), d = pick(rng, 1, 8);
      const std::size_t k = rng() % 2 ? 3 : 5, stride = pick(rng, 1, 2);
      auto x = audit_tensor({n, cin, d}, rng), w = audit_tensor({cout, cin, k}, rng), b = audit_tensor({cout}, rng);
      const auto proj = audit_tensor({n, cout, (d + stride - 1) / stride}, rng);
      const auto g = nn::conv1d_backward(x, w, stride, proj);
      std::vector<GradTarget<double>> t{{"x", x.data(), audit_vec(g.dx.data())},
                                        {"w", w.data(), audit_vec(g.dw.data())},
                                        {"b", b.data(), audit_vec(g.db.data())}};
      detail::accumulate(r, nn::grad_check<double>(
                                t, [&] { return audit_dot(nn::conv1d_forward(x, w, b, stride).data(), proj.data()); }, {}, gc));
    }
    out.push_back(r);
  }
  {
    AuditResult r{"batchnorm"};
    for (std::size_t i = 0; i < opts.cases; ++i) {
      std::mt19937_64 rng(opts.seed * 1000 + 100 + i);
      const std::size_t n = pick(rng, 1, 3), c = pick(rng, 1, 3), d = pick(rng, 2, 7);
      nn::ParamStore<double> store;
      nn::BatchNorm1d<double> bn(store, "bn", c);
      nn::fill_normal(bn.gamma().value.data(), rng);
      nn::fill_normal(bn.beta().value.data(), rng);
      auto x = audit_tensor({n, c, d}, rng);
      const auto proj = audit_tensor({n, c, d}, rng);
      bn.forward(x, Mode::train);
      const auto dx = bn.backward(proj);
      std::vector<GradTarget<double>> t{{"x", x.data(), audit_vec(dx.data())},
                                        {"gamma", bn.gamma().value.data(), audit_vec(bn.gamma().grad())},
                                        {"beta", bn.beta().value.data(), audit_vec(bn.beta().grad())}};
      detail::accumulate(r, nn::grad_check<double>(
                                t, [&] { return audit_dot(bn.forward(x, Mode::train).data(), proj.data()); }, {}, gc));
    }
    out.push_back(r);
  }
  {
    AuditResult r{"relu"};
    for (std::size_t i = 0; i < opts.cases; ++i) {
      std::mt19937_64 rng(opts.seed * 1000 + 200 + i);
      auto x = audit_tensor({2, 3, 5}, rng);
      const auto proj = audit_tensor({2, 3, 5}, rng);
      nn::ReLU<double> relu;
      relu.forward(x);
      const auto dx = relu.backward(proj);
      std::vector<GradTarget<double>> t{{"x", x.data(), audit_vec(dx.data())}};
      detail::accumulate(r, nn::grad_check<double>(
                                t, [&] { return audit_dot(relu.forward(x, Mode::infer).data(), proj.data()); },
                                [&] { return relu.signature(); }, gc));
    }
    out.push_back(r);
  }
  {
    AuditResult r{"subpixel_shuffle"};
    for (std::size_t i = 0; i < opts.cases; ++i) {
      std::mt19937_64 rng(opts.seed * 1000 + 300 + i);
      const std::size_t n = pick(rng, 1, 2), f = 2 * pick(rng, 1, 3), d = pick(rng, 1, 6);
      auto x = audit_tensor({n, f, d}, rng);
      const auto proj = audit_tensor({n, f / 2, 2 * d}, rng);
      const auto dx = nn::subpixel_unshuffle_1d(proj);
      std::vector<GradTarget<double>> t{{"x", x.data(), audit_vec(dx.data())}};
      detail::accumulate(r, nn::grad_check<double>(
                                t, [&] { return audit_dot(nn::subpixel_shuffle_1d(x).data(), proj.data()); }, {}, gc));
    }
    out.push_back(r);
  }
  {
    AuditResult r{"concat"};
    for (std::size_t i = 0; i < opts.cases; ++i) {
      std::mt19937_64 rng(opts.seed * 1000 + 400 + i);
      const std::size_t n = pick(rng, 1, 2), fa = pick(rng, 1, 3), fb = pick(rng, 1, 3), d = pick(rng, 1, 6);
      auto a = audit_tensor({n, fa, d}, rng), b = audit_tensor({n, fb, d}, rng);
      const auto proj = audit_tensor({n, fa + fb, d}, rng);
      auto [da, db] = nn::split_channels(proj, fa);
      std::vector<GradTarget<double>> t{{"a", a.data(), audit_vec(da.data())}, {"b", b.data(), audit_vec(db.data())}};
      detail::accumulate(r, nn::grad_check<double>(
                                t, [&] { return audit_dot(nn::concat_channels(a, b).data(), proj.data()); }, {}, gc));
    }
    out.push_back(r);
  }
  for (auto mode : {nn::LossMode::mean_sq, nn::LossMode::root_sum}) {
    AuditResult r{mode == nn::LossMode::mean_sq ? "mse_loss" : "mse_loss_root_sum"};
    for (std::size_t i = 0; i < opts.cases; ++i) {
      std::mt19937_64 rng(opts.seed * 1000 + 500 + i);
      auto pred = audit_tensor({3, 1, 7}, rng);
      const auto target = audit_tensor({3, 1, 7}, rng);
      const auto res = nn::mse_loss(pred, target, mode);
      std::vector<GradTarget<double>> t{{"pred", pred.data(), audit_vec(res.grad.data())}};
      detail::accumulate(r, nn::grad_check<double>(t, [&] { return nn::mse_loss(pred, target, mode).value; }, {}, gc));
    }
    out.push_back(r);
  }
  {
    AuditResult r{"dense"};
    for (std::size_t i = 0; i < opts.cases; ++i) {
      std::mt19937_64 rng(opts.seed * 1000 + 600 + i);
      nn::ParamStore<double> store;
      nn::Dense<double> layer(store, "fc", pick(rng, 1, 5), pick(rng, 1, 4));
      layer.init(rng);
      nn::fill_normal(layer.bias().value.data(), rng);
      auto x = audit_tensor({pick(rng, 1, 4), layer.in_features()}, rng);
      const auto proj = audit_tensor({x.dim(0), layer.out_features()}, rng);
      layer.forward(x, Mode::train);
      const auto dx = layer.backward(proj);
      std::vector<GradTarget<double>> t{{"x", x.data(), audit_vec(dx.data())},
                                        {"w", layer.weight().value.data(), audit_vec(layer.weight().grad())},
                                        {"b", layer.bias().value.data(), audit_vec(layer.bias().grad())}};
      detail::accumulate(r, nn::grad_check<double>(
                                t, [&] { return audit_dot(layer.forward(x, Mode::infer).data(), proj.data()); }, {}, gc));
    }
    out.push_back(r);
  }
  {
    AuditResult r{"up_block"};
    for (std::size_t i = 0; i < opts.cases; ++i) {
      std::mt19937_64 rng(opts.seed * 1000 + 700 + i);
      nn::ParamStore<double> store;
      nn::Conv1d<double> conv(store, "up.conv", 3, 4, 5, 1);
      nn::BatchNorm1d<double> bn(store, "up.bn", 4);
      nn::ReLU<double> relu;
      conv.init(rng);
      nn::fill_normal(bn.gamma().value.data(), rng);
      nn::fill_normal(bn.beta().value.data(), rng, 0.3);
      auto x = audit_tensor({2, 3, 6}, rng);
      const auto proj = audit_tensor({2, 2, 12}, rng);
      auto run = [&] { return nn::subpixel_shuffle_1d(relu.forward(bn.forward(conv.forward(x), Mode::train))); };
      run();
      const auto dx = conv.backward(bn.backward(relu.backward(nn::subpixel_unshuffle_1d(proj))));
      std::vector<GradTarget<double>> t{{"x", x.data(), audit_vec(dx.data())},
                                        {"conv.weight", conv.weight().value.data(), audit_vec(conv.weight().grad())},
                                        {"conv.bias", conv.bias().value.data(), audit_vec(conv.bias().grad())},
                                        {"bn.gamma", bn.gamma().value.data(), audit_vec(bn.gamma().grad())},
                                        {"bn.beta", bn.beta().value.data(), audit_vec(bn.beta().grad())}};
      detail::accumulate(r, nn::grad_check<double>(
                                t, [&] { return audit_dot(run().data(), proj.data()); }, [&] { return relu.signature(); }, gc));
    }
    out.push_back(r);
  }
  {
    AuditResult r{"audiounet_b2"};
    const auto cfg = audit_model_config();
    for (std::size_t i = 0; i < opts.cases; ++i) {
      std::mt19937_64 rng(opts.seed * 1000 + 800 + i);
      AudioUNet<double> net(cfg, opts.seed * 1000 + 800 + i);
      for (std::size_t p = 0; p < net.params().size(); ++p) {
        auto& prm = net.params()[p];
        // Perturb batch-norm affine terms and biases away from their identity init.
        if (prm.name.ends_with(".gamma")) {
          for (auto& v : prm.value.data()) v = 1.0 + 0.3 * (2.0 * nn::uniform01(rng) - 1.0);
        } else if (prm.name.ends_with(".beta") || prm.name.ends_with(".bias")) {
          nn::fill_normal(prm.value.data(), rng, 0.1);
        }
      }
      auto x = audit_tensor({2, 1, cfg.patch_length}, rng, 0.5);
      const auto proj = audit_tensor({2, 1, cfg.patch_length}, rng);
      net.forward(x, Mode::train);
      const auto dx = net.backward(proj, true);
      std::vector<GradTarget<double>> t{{"input", x.data(), audit_vec(dx.data())}};
      for (std::size_t p = 0; p < net.params().size(); ++p) {
        auto& prm = net.params()[p];
        if (prm.trainable) t.push_back({prm.name, prm.value.data(), audit_vec(prm.grad())});
      }
      detail::accumulate(r, nn::grad_check<double>(
                                t, [&] { return audit_dot(net.forward(x, Mode::train).data(), proj.data()); },
                                [&] { return net.activation_signature(); }, gc));
    }
    out.push_back(r);
  }
  return out;
}

inline bool audit_passed(const std::vector<AuditResult>& results, double tol) {
  if (results.empty()) return false;
  for (const auto& r : results) {
    if (!r.passed(tol)) return false;
  }
  return true;
}

}  // namespace bwex
