#pragma once

// Dense-network bandwidth-extension baseline working on STFT frames.
//
// Per frame of the spline-upscaled input (frame 2048, hop 1024, Hann), the
// network sees log-magnitude and phase of bins 0..c with c = (frame/2) / r and
// predicts log-magnitude and phase of bins c+1..frame/2. Reconstruction keeps
// the input's low bins, substitutes the predicted high bins and inverts by
// weighted overlap-add. Phase is regressed as raw radians.
//
// Features and targets are standardized per dimension with training-set
// statistics; the statistics live in the parameter store (non-trainable) and
// travel with checkpoints.

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bwex/audio/wav.hpp"
#include "bwex/data/archive.hpp"
#include "bwex/data/corpus.hpp"
#include "bwex/dsp/resample.hpp"
#include "bwex/dsp/stft.hpp"
#include "bwex/error.hpp"
#include "bwex/model/predict.hpp"
#include "bwex/nn/activation.hpp"
#include "bwex/nn/adam.hpp"
#include "bwex/nn/checkpoint.hpp"
#include "bwex/nn/dense.hpp"
#include "bwex/nn/loss.hpp"

namespace bwex {

inline constexpr double kLogMagEps = 1e-5;

struct SpectralDNNConfig {
  int r = 2;
  std::size_t frame_length = 2048;
  std::size_t hop = 1024;
  std::vector<std::size_t> hidden{2048, 2048, 2048};

  std::size_t num_bins() const { return frame_length / 2 + 1; }
  std::size_t cutoff() const { return (frame_length / 2) / static_cast<std::size_t>(r); }
  std::size_t input_dim() const { return 2 * (cutoff() + 1); }
  std::size_t output_dim() const { return 2 * (num_bins() - cutoff() - 1); }

  void validate() const {
    if (r == 6) throw DomainError("spectral DNN baseline: not applicable for r = 6 (ratio must be a power of two)");
    if (r < 2 || (r & (r - 1)) != 0) throw DomainError("spectral DNN baseline: r must be a power of two >= 2, got " + std::to_string(r));
    if (frame_length < 4 || (frame_length & (frame_length - 1)) != 0) throw ConfigError("spectral DNN baseline: frame length must be a power of two");
    if (hop == 0 || hop > frame_length) throw ConfigError("spectral DNN baseline: hop must be in [1, frame_length]");
    if (frame_length / 2 < static_cast<std::size_t>(r)) throw ConfigError("spectral DNN baseline: frame too short for r");
    if (hidden.empty()) throw ConfigError("spectral DNN baseline: need at least one hidden layer");
  }
};

inline void to_json(nlohmann::json& j, const SpectralDNNConfig& c) {
  j = nlohmann::json{{"r", c.r}, {"frame_length", c.frame_length}, {"hop", c.hop}, {"hidden", c.hidden}};
}
inline void from_json(const nlohmann::json& j, SpectralDNNConfig& c) {
  j.at("r").get_to(c.r);
  j.at("frame_length").get_to(c.frame_length);
  j.at("hop").get_to(c.hop);
  j.at("hidden").get_to(c.hidden);
}

// ---- framing -------------------------------------------------------------

/// One hop of zeros in front, and enough at the end that the last sample is
/// covered by a full window; frames then tile the padded signal exactly.
struct FramedSignal {
  std::vector<double> padded;
  std::size_t offset = 0;  // index of original sample 0 in `padded`
  std::size_t length = 0;  // original length
};

inline FramedSignal pad_for_frames(std::span<const double> x, const SpectralDNNConfig& c) {
  FramedSignal f;
  f.offset = c.hop;
  f.length = x.size();
  const std::size_t need = c.hop + x.size() + c.hop;
  std::size_t total = c.frame_length;
  if (need > total) total += (need - c.frame_length + c.hop - 1) / c.hop * c.hop;
  f.padded.assign(total, 0.0);
  std::copy(x.begin(), x.end(), f.padded.begin() + static_cast<std::ptrdiff_t>(f.offset));
  return f;
}

inline void encode_bins(std::span<const std::complex<double>> bins, std::span<float> out) {
  const std::size_t n = bins.size();
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = static_cast<float>(std::log(std::abs(bins[k]) + kLogMagEps));
    out[n + k] = static_cast<float>(std::arg(bins[k]));
  }
}

inline void decode_bins(std::span<const float> in, std::span<std::complex<double>> bins) {
  const std::size_t n = bins.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double mag = std::max(std::exp(static_cast<double>(in[k])) - kLogMagEps, 0.0);
    bins[k] = std::polar(mag, static_cast<double>(in[n + k]));
  }
}

/// Frame-major features (frames x input_dim) of a signal on the high-rate grid.
inline std::vector<float> dnn_input_features(const Spectrogram& spec, const SpectralDNNConfig& c) {
  const std::size_t low = c.cutoff() + 1, in = c.input_dim();
  std::vector<float> f(spec.num_frames * in);
  for (std::size_t l = 0; l < spec.num_frames; ++l) {
    encode_bins(spec.frame(l).subspan(0, low), std::span<float>(f).subspan(l * in, in));
  }
  return f;
}

inline std::vector<float> dnn_target_features(const Spectrogram& spec, const SpectralDNNConfig& c) {
  const std::size_t low = c.cutoff() + 1, out = c.output_dim();
  std::vector<float> f(spec.num_frames * out);
  for (std::size_t l = 0; l < spec.num_frames; ++l) {
    encode_bins(spec.frame(l).subspan(low), std::span<float>(f).subspan(l * out, out));
  }
  return f;
}

/// Keeps the low bins of `input` and replaces bins c+1.. with the decoded
/// `high` rows (frames x output_dim, unstandardized), then inverts.
inline std::vector<double> dnn_reconstruct(std::span<const double> input, std::span<const float> high, const SpectralDNNConfig& c) {
  c.validate();
  const auto fs = pad_for_frames(input, c);
  auto spec = stft(fs.padded, c.frame_length, c.hop, Window::hann);
  const std::size_t low = c.cutoff() + 1, out = c.output_dim();
  if (high.size() != spec.num_frames * out) {
    throw ShapeError("dnn_reconstruct: expected " + std::to_string(spec.num_frames) + " x " + std::to_string(out) + " high-band values, got " +
                     std::to_string(high.size()));
  }
  for (std::size_t l = 0; l < spec.num_frames; ++l) decode_bins(high.subspan(l * out, out), spec.frame(l).subspan(low));
  const auto full = istft(spec, fs.padded.size());
  return std::vector<double>(full.begin() + static_cast<std::ptrdiff_t>(fs.offset),
                             full.begin() + static_cast<std::ptrdiff_t>(fs.offset + fs.length));
}

// ---- dataset -------------------------------------------------------------

struct DnnDataset {
  std::size_t input_dim = 0, output_dim = 0;
  std::vector<float> x, y;  // row-major, one frame per row

  std::size_t size() const { return input_dim ? x.size() / input_dim : 0; }
};

/// Adds the frames of one (upscaled input, original) pair of equal length.
inline void append_dnn_frames(DnnDataset& ds, std::span<const double> upscaled, std::span<const double> target, const SpectralDNNConfig& c) {
  c.validate();
  if (upscaled.size() != target.size()) throw LengthError("append_dnn_frames: input and target lengths differ");
  ds.input_dim = c.input_dim();
  ds.output_dim = c.output_dim();
  const auto fi = pad_for_frames(upscaled, c), ft = pad_for_frames(target, c);
  const auto xi = dnn_input_features(stft(fi.padded, c.frame_length, c.hop), c);
  const auto yt = dnn_target_features(stft(ft.padded, c.frame_length, c.hop), c);
  ds.x.insert(ds.x.end(), xi.begin(), xi.end());
  ds.y.insert(ds.y.end(), yt.begin(), yt.end());
}

/// Frames of every patch pair in an archive (inputs are already upscaled).
inline DnnDataset dnn_dataset_from_archive(const PatchArchive& a, const SpectralDNNConfig& c) {
  DnnDataset ds;
  ds.input_dim = c.input_dim();
  ds.output_dim = c.output_dim();
  std::vector<double> in(static_cast<std::size_t>(a.patch_length)), tg(in.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::copy(a.input(i).begin(), a.input(i).end(), in.begin());
    std::copy(a.target(i).begin(), a.target(i).end(), tg.begin());
    append_dnn_frames(ds, in, tg, c);
  }
  return ds;
}

// ---- network -------------------------------------------------------------

template <typename T>
class SpectralDNN {
 public:
  SpectralDNN(const SpectralDNNConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::size_t in = cfg_.input_dim();
    for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
      layers_.emplace_back(store_, "dense" + std::to_string(i + 1), in, cfg_.hidden[i]);
      in = cfg_.hidden[i];
    }
    layers_.emplace_back(store_, "out", in, cfg_.output_dim());
    relus_.resize(cfg_.hidden.size());
    in_mean_ = &store_.add("norm.in_mean", {cfg_.input_dim()}, false);
    in_std_ = &store_.add("norm.in_std", {cfg_.input_dim()}, false);
    out_mean_ = &store_.add("norm.out_mean", {cfg_.output_dim()}, false);
    out_std_ = &store_.add("norm.out_std", {cfg_.output_dim()}, false);
    in_std_->value.fill(T{1});
    out_std_->value.fill(T{1});
    std::mt19937_64 rng(seed);
    for (auto& l : layers_) l.init(rng);
  }

  SpectralDNN(SpectralDNN&&) noexcept = default;

  const SpectralDNNConfig& config() const noexcept { return cfg_; }
  nn::ParamStore<T>& params() noexcept { return store_; }
  const nn::ParamStore<T>& params() const noexcept { return store_; }
  std::size_t parameter_count() const { return store_.trainable_count(); }

  /// Per-dimension mean/std of the dataset; std below 1e-6 is replaced by 1.
  void fit_normalization(const DnnDataset& ds) {
    if (ds.size() == 0) throw ConfigError("fit_normalization: empty dataset");
    auto fit = [&](const std::vector<float>& v, std::size_t dim, nn::Parameter<T>* mean, nn::Parameter<T>* sd) {
      const std::size_t n = v.size() / dim;
      for (std::size_t j = 0; j < dim; ++j) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i * dim + j];
        const double m = s / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) s2 += (v[i * dim + j] - m) * (v[i * dim + j] - m);
        const double sdv = std::sqrt(s2 / static_cast<double>(n));
        mean->value[j] = static_cast<T>(m);
        sd->value[j] = static_cast<T>(sdv > 1e-6 ? sdv : 1.0);
      }
    };
    fit(ds.x, cfg_.input_dim(), in_mean_, in_std_);
    fit(ds.y, cfg_.output_dim(), out_mean_, out_std_);
  }

  /// Standardized rows in, standardized predictions out.
  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode) {
    nn::Tensor<T> h = x;
    for (std::size_t i = 0; i < relus_.size(); ++i) h = relus_[i].forward(layers_[i].forward(h, mode), mode);
    return layers_.back().forward(h, mode);
  }

  void backward(const nn::Tensor<T>& dy) {
    nn::Tensor<T> g = layers_.back().backward(dy, true);
    for (std::size_t i = relus_.size(); i-- > 0;) g = layers_[i].backward(relus_[i].backward(g), i > 0);
  }

  nn::Tensor<T> standardize_inputs(std::span<const float> rows) const { return standardize(rows, *in_mean_, *in_std_); }
  nn::Tensor<T> standardize_targets(std::span<const float> rows) const { return standardize(rows, *out_mean_, *out_std_); }

  /// Raw (unstandardized) high-band features for raw input features.
  std::vector<float> predict_features(std::span<const float> rows) {
    const auto y = forward(standardize_inputs(rows), nn::Mode::infer);
    const std::size_t out = cfg_.output_dim();
    std::vector<float> r(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const std::size_t j = i % out;
      r[i] = static_cast<float>(static_cast<double>(y[i]) * out_std_->value[j] + out_mean_->value[j]);
    }
    return r;
  }

  /// Enhances a signal already on the high-rate grid.
  std::vector<double> enhance(std::span<const double> upscaled) {
    const auto fs = pad_for_frames(upscaled, cfg_);
    const auto feats = dnn_input_features(stft(fs.padded, cfg_.frame_length, cfg_.hop), cfg_);
    return dnn_reconstruct(upscaled, predict_features(feats), cfg_);
  }

 private:
  nn::Tensor<T> standardize(std::span<const float> rows, const nn::Parameter<T>& mean, const nn::Parameter<T>& sd) const {
    const std::size_t dim = mean.value.size();
    if (rows.size() % dim != 0) throw ShapeError("spectral DNN: feature rows do not match dimension " + std::to_string(dim));
    nn::Tensor<T> t({rows.size() / dim, dim});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t j = i % dim;
      t[i] = static_cast<T>((static_cast<double>(rows[i]) - mean.value[j]) / sd.value[j]);
    }
    return t;
  }

  SpectralDNNConfig cfg_;
  nn::ParamStore<T> store_;
  std::vector<nn::Dense<T>> layers_;
  std::vector<nn::ReLU<T>> relus_;
  nn::Parameter<T>* in_mean_ = nullptr;
  nn::Parameter<T>* in_std_ = nullptr;
  nn::Parameter<T>* out_mean_ = nullptr;
  nn::Parameter<T>* out_std_ = nullptr;
};

struct DnnTrainOptions {
  int epochs = 10;
  std::size_t batch = 16;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;  // 0 = no cap
};

/// MSE on standardized targets, ADAM, seeded per-epoch shuffle. Normalization
/// must already be fitted. Returns the loss of every step.
template <typename T>
std::vector<double> train_dnn(SpectralDNN<T>& net, const DnnDataset& ds, const DnnTrainOptions& o) {
  if (ds.size() == 0) throw ConfigError("train_dnn: empty dataset");
  if (ds.input_dim != net.config().input_dim() || ds.output_dim != net.config().output_dim()) {
    throw ConfigError("train_dnn: dataset dimensions do not match the network");
  }
  const nn::AdamConfig adam{.lr = o.lr};
  std::vector<double> losses;
  std::vector<float> bx, by;
  for (int epoch = 0; epoch < o.epochs; ++epoch) {
    const auto perm = seeded_permutation(ds.size(), o.seed * 1000003ull + static_cast<std::uint64_t>(epoch));
    for (std::size_t start = 0; start < perm.size(); start += o.batch) {
      if (o.max_steps && losses.size() >= o.max_steps) return losses;
      const std::size_t n = std::min(o.batch, perm.size() - start);
      bx.clear();
      by.clear();
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t i = perm[start + b];
        bx.insert(bx.end(), ds.x.begin() + static_cast<std::ptrdiff_t>(i * ds.input_dim), ds.x.begin() + static_cast<std::ptrdiff_t>((i + 1) * ds.input_dim));
        by.insert(by.end(), ds.y.begin() + static_cast<std::ptrdiff_t>(i * ds.output_dim), ds.y.begin() + static_cast<std::ptrdiff_t>((i + 1) * ds.output_dim));
      }
      const auto pred = net.forward(net.standardize_inputs(bx), nn::Mode::train);
      auto loss = nn::mse_loss(pred, net.standardize_targets(by));
      if (!std::isfinite(loss.value)) {
        throw NumericError("train_dnn: non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(losses.size()));
      }
      net.backward(loss.grad);
      nn::adam_step(net.params(), adam);
      losses.push_back(loss.value);
    }
  }
  return losses;
}

template <typename T>
void save_dnn(const SpectralDNN<T>& net, const std::filesystem::path& ckpt, const nlohmann::json& extra = nlohmann::json::object()) {
  nn::save_checkpoint(net.params(), ckpt);
  write_json_file(sidecar_path(ckpt), {{"schema", kSidecarSchema}, {"model_type", "dnn"}, {"config", net.config()}, {"extra", extra}});
}

template <typename T>
SpectralDNN<T> load_dnn(const std::filesystem::path& ckpt) {
  const auto side = read_json_file(sidecar_path(ckpt));
  if (side.value("schema", "") != kSidecarSchema) throw UnsupportedFormatError("sidecar schema mismatch in " + sidecar_path(ckpt).string());
  if (side.value("model_type", "") != "dnn") throw ConfigError(ckpt.string() + " is not a dnn checkpoint");
  SpectralDNN<T> net(side.at("config").get<SpectralDNNConfig>(), 0);
  nn::load_checkpoint(net.params(), ckpt);
  return net;
}

/// Model type recorded in a checkpoint sidecar ("audiounet" or "dnn").
inline std::string checkpoint_model_type(const std::filesystem::path& ckpt) {
  return read_json_file(sidecar_path(ckpt)).value("model_type", "");
}

}  // namespace bwex
