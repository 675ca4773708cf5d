#pragma once

// Epoch loop over patch archives: seeded shuffle, batched MSE + ADAM,
// validation each epoch, best/last checkpoints and history.csv.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bwex/data/archive.hpp"
#include "bwex/data/corpus.hpp"
#include "bwex/model/audio_unet.hpp"
#include "bwex/model/predict.hpp"
#include "bwex/nn/adam.hpp"
#include "bwex/nn/loss.hpp"

namespace bwex {

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_mse = 0.0;
  double val_mse = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
};

struct TrainOptions {
  int epochs = 400;
  std::size_t batch = 16;
  double lr = 1e-4;
  std::uint64_t seed = 0;     // shuffling; model init is the caller's
  double clip_norm = 0.0;     // 0 = off
  std::filesystem::path out_dir;  // empty = keep nothing on disk
  bool resume = false;        // continue from out_dir/last.ckpt
  std::function<void(const EpochStats&)> on_epoch;
};

inline void to_json(nlohmann::json& j, const TrainOptions& o) {
  j = nlohmann::json{{"epochs", o.epochs}, {"batch", o.batch}, {"lr", o.lr}, {"seed", o.seed}, {"clip_norm", o.clip_norm}};
}

struct TrainResult {
  std::vector<EpochStats> history;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
};

namespace detail {

inline std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  // splitmix64 finalizer over (seed, epoch); keeps epochs independent of resume points.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(epoch + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

template <typename T>
void fill_batch(const PatchArchive& a, std::span<const std::size_t> idx, nn::Tensor<T>& x, nn::Tensor<T>& y) {
  const std::size_t L = static_cast<std::size_t>(a.patch_length);
  x = nn::Tensor<T>({idx.size(), 1, L});
  y = nn::Tensor<T>({idx.size(), 1, L});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto in = a.input(idx[b]);
    const auto tg = a.target(idx[b]);
    for (std::size_t i = 0; i < L; ++i) {
      x[b * L + i] = static_cast<T>(in[i]);
      y[b * L + i] = static_cast<T>(tg[i]);
    }
  }
}

inline std::string format_history_row(const EpochStats& s) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d,%.9e,%.9e,%.3f", s.epoch, s.train_mse, s.val_mse, s.wall_seconds);
  return buf;
}

}  // namespace detail

/// Mean squared error over every sample of the archive, inference mode.
template <typename T>
double evaluate_mse(AudioUNet<T>& net, const PatchArchive& a, std::size_t batch = 16) {
  if (a.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  std::vector<std::size_t> idx;
  nn::Tensor<T> x, y;
  for (std::size_t start = 0; start < a.size(); start += batch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(a.size(), start + batch); ++i) idx.push_back(i);
    detail::fill_batch(a, idx, x, y);
    const auto pred = net.forward(x, nn::Mode::infer);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = static_cast<double>(pred[i]) - static_cast<double>(y[i]);
      sum += d * d;
    }
  }
  return sum / static_cast<double>(a.inputs.size());
}

inline const char* kHistoryHeader = "epoch,train_mse,val_mse,wall_seconds";

inline std::vector<EpochStats> read_history(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw IoError("cannot open '" + p.string() + "'");
  std::string line;
  std::getline(f, line);
  if (line != kHistoryHeader) throw ParseError("unexpected history header in '" + p.string() + "'", 0);
  std::vector<EpochStats> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream is(line);
    for (std::string c; std::getline(is, c, ',');) cells.push_back(c);
    if (cells.size() != 4) throw ParseError("bad history row '" + line + "' in '" + p.string() + "'", 0);
    EpochStats s;
    s.epoch = std::stoi(cells[0]);
    s.train_mse = std::strtod(cells[1].c_str(), nullptr);
    s.val_mse = std::strtod(cells[2].c_str(), nullptr);  // accepts "nan"
    s.wall_seconds = std::strtod(cells[3].c_str(), nullptr);
    out.push_back(s);
  }
  return out;
}

inline void write_history(const std::filesystem::path& p, const std::vector<EpochStats>& h) {
  std::ofstream f(p, std::ios::trunc);
  f << kHistoryHeader << '\n';
  for (const auto& s : h) f << detail::format_history_row(s) << '\n';
  if (!f) throw IoError("cannot write '" + p.string() + "'");
}

/// Trains `net` in place. With out_dir set, writes after every epoch:
/// last.ckpt, best.ckpt (lowest val_mse so far; lowest train_mse when there
/// is no validation data) and history.csv. Sidecars carry no timing, so
/// checkpoints are byte-identical across runs with equal seeds.
template <typename T>
TrainResult train(AudioUNet<T>& net, const PatchArchive& train_set, const PatchArchive& val_set, const TrainOptions& o) {
  if (train_set.size() == 0) throw ConfigError("train: training archive is empty");
  if (o.batch == 0) throw ConfigError("train: batch size must be positive");
  if (o.epochs < 0) throw ConfigError("train: epochs must be non-negative");
  const std::size_t mult = net.config().length_multiple();
  if (train_set.patch_length % static_cast<int>(mult) != 0) {
    throw ConfigError("train: patch length " + std::to_string(train_set.patch_length) + " is not divisible by 2^" +
                      std::to_string(net.config().blocks));
  }
  if (val_set.size() && val_set.patch_length % static_cast<int>(mult) != 0) {
    throw ConfigError("train: validation patch length is not compatible with the model");
  }

  TrainResult res;
  const bool persist = !o.out_dir.empty();
  const auto last = o.out_dir / "last.ckpt", best = o.out_dir / "best.ckpt", hist = o.out_dir / "history.csv";
  if (persist) {
    std::error_code ec;
    std::filesystem::create_directories(o.out_dir, ec);
    if (ec) throw IoError("cannot create '" + o.out_dir.string() + "': " + ec.message());
  }
  int start_epoch = 0;
  if (o.resume) {
    if (!persist) throw UsageError("train: resume needs an output directory");
    if (std::filesystem::exists(last)) {
      nn::load_checkpoint(net.params(), last);
      const auto extra = read_json_file(sidecar_path(last)).at("extra");
      start_epoch = extra.at("epoch").get<int>();
      res.best_epoch = extra.at("best_epoch").get<int>();
      res.best_val = extra.at("best_val").is_null() ? std::numeric_limits<double>::infinity() : extra.at("best_val").get<double>();
      res.history = read_history(hist);
      if (static_cast<int>(res.history.size()) < start_epoch) throw ParseError("history shorter than checkpoint epoch", 0);
      res.history.resize(static_cast<std::size_t>(start_epoch));
    }
  }

  const nn::AdamConfig adam{.lr = o.lr};
  const auto t0 = std::chrono::steady_clock::now();
  const double prior_seconds = res.history.empty() ? 0.0 : res.history.back().wall_seconds;
  nn::Tensor<T> x, y;
  for (int epoch = start_epoch; epoch < o.epochs; ++epoch) {
    const auto perm = seeded_permutation(train_set.size(), detail::epoch_seed(o.seed, epoch));
    double sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < perm.size(); start += o.batch, ++batch_index) {
      const std::size_t n = std::min(o.batch, perm.size() - start);
      detail::fill_batch(train_set, std::span<const std::size_t>(perm).subspan(start, n), x, y);
      const auto pred = net.forward(x, nn::Mode::train);
      auto loss = nn::mse_loss(pred, y);
      net.backward(loss.grad);
      const double gmax = net.params().max_abs_grad();
      if (!std::isfinite(loss.value) || !std::isfinite(gmax)) {
        std::ostringstream msg;
        msg << "non-finite loss/gradient at epoch " << epoch + 1 << ", batch " << batch_index << " (loss " << loss.value
            << ", max |grad| " << gmax << ")";
        throw NumericError(msg.str());
      }
      if (o.clip_norm > 0.0) nn::clip_grad_norm(net.params(), o.clip_norm);
      nn::adam_step(net.params(), adam);
      sum += loss.value * static_cast<double>(n);
    }
    EpochStats s;
    s.epoch = epoch + 1;
    s.train_mse = sum / static_cast<double>(perm.size());
    s.val_mse = evaluate_mse(net, val_set, o.batch);
    s.wall_seconds = prior_seconds + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(s);

    const double score = std::isnan(s.val_mse) ? s.train_mse : s.val_mse;
    const bool improved = score < res.best_val;
    if (improved) {
      res.best_val = score;
      res.best_epoch = s.epoch;
    }
    if (persist) {
      nlohmann::json extra{{"epoch", s.epoch}, {"best_epoch", res.best_epoch}, {"best_val", res.best_val}, {"train", o}};
      if (train_set.manifest.is_object() && train_set.manifest.contains("r")) {
        extra["data"] = {{"r", train_set.manifest["r"]}, {"use_lpf", train_set.manifest.value("use_lpf", true)}};
      }
      if (improved) save_model(net, best, extra);
      save_model(net, last, extra);
      write_history(hist, res.history);
    }
    if (o.on_epoch) o.on_epoch(s);
  }
  return res;
}

struct AblationOptions {
  std::vector<Ablation> variants{Ablation::full, Ablation::no_residual, Ablation::no_skip};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  TrainOptions train;  // out_dir is the suite root
};

struct AblationRun {
  Ablation variant;
  std::uint64_t seed;
  TrainResult result;
};

/// One training run per (variant, seed) with identical data, shuffling and
/// init seed across variants. Writes <root>/<variant>/seed<k>/... and
/// <root>/summary.csv (variant, seed, final val, best val).
inline std::vector<AblationRun> ablation_suite(const ModelConfig& base, const PatchArchive& train_set, const PatchArchive& val_set,
                                               const AblationOptions& o) {
  std::vector<AblationRun> runs;
  for (auto v : o.variants) {
    for (auto seed : o.seeds) {
      AudioUNet<float> net(apply_ablation(base, v), seed);
      TrainOptions to = o.train;
      to.seed = seed;
      if (!o.train.out_dir.empty()) to.out_dir = o.train.out_dir / to_string(v) / ("seed" + std::to_string(seed));
      runs.push_back({v, seed, train(net, train_set, val_set, to)});
    }
  }
  if (!o.train.out_dir.empty()) {
    std::ofstream f(o.train.out_dir / "summary.csv", std::ios::trunc);
    f << "variant,seed,final_val_mse,best_val_mse\n";
    for (const auto& r : runs) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s,%llu,%.9e,%.9e", to_string(r.variant), static_cast<unsigned long long>(r.seed),
                    r.result.history.empty() ? std::nan("") : r.result.history.back().val_mse, r.result.best_val);
      f << buf << '\n';
    }
  }
  return runs;
}

/// Median final validation loss of one variant across its seeds.
inline double median_final_val(const std::vector<AblationRun>& runs, Ablation v) {
  std::vector<double> vals;
  for (const auto& r : runs) {
    if (r.variant == v && !r.result.history.empty()) vals.push_back(r.result.history.back().val_mse);
  }
  if (vals.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(vals.begin(), vals.end());
  const std::size_t m = vals.size() / 2;
  return vals.size() % 2 ? vals[m] : 0.5 * (vals[m - 1] + vals[m]);
}

}  // namespace bwex
