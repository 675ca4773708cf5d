#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "bwex/error.hpp"
#include "bwex/nn/tensor.hpp"

namespace bwex::nn {

/// A named model tensor. Trainable parameters carry a gradient slot and ADAM
/// moments; non-trainable entries (batch-norm running statistics) do not.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
  bool grad_ready = false;  // set by a backward pass, cleared by the optimizer
  std::vector<T> adam_m;
  std::vector<T> adam_v;
  std::uint64_t step = 0;

  std::span<T> grad() { return value.grad(); }
  void mark_grad() { grad_ready = true; }
};

/// Owns every parameter of a model. Entries are heap-allocated so references
/// handed to layers stay valid when the store moves.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Parameter<T>& add(const std::string& name, Shape shape, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("parameter '" + name + "' already exists");
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->value = Tensor<T>(std::move(shape));
    p->trainable = trainable;
    if (trainable) {
      p->value.enable_grad();
      p->adam_m.assign(p->value.size(), T{0});
      p->adam_v.assign(p->value.size(), T{0});
    }
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("no parameter named '" + name + "'");
    return *params_[it->second];
  }
  const Parameter<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("no parameter named '" + name + "'");
    return *params_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  /// Number of trainable scalars.
  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (p->trainable) n += p->value.size();
    }
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) {
      if (p->trainable) {
        p->value.zero_grad();
        p->grad_ready = false;
      }
    }
  }

  double max_abs_grad() const {
    double g = 0.0;
    for (const auto& p : params_) {
      if (!p->trainable) continue;
      for (T v : p->value.grad()) g = std::max(g, std::abs(static_cast<double>(v)));
    }
    return g;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Portable uniform draw in [0, 1) from the top 53 bits of a 64-bit engine.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Glorot-uniform fill in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data()) v = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
}

}  // namespace bwex::nn
