#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

#include "bwex/error.hpp"

namespace bwex {

/// Architecture of the residual encoder-decoder.
///
/// The default schedules follow the growing-filters / shrinking-kernels
/// design: down block b (1-based) has min(2^(6+b), 512) filters of length
/// max(2^(7-b) + 1, 9); up block b mirrors down block B-b+1. The literal
/// max/min form of these formulas is constant in b (512 filters of length 9
/// everywhere), which contradicts the halve-length / double-filters
/// description, so min and max are swapped here.
struct ModelConfig {
  int blocks = 4;
  std::size_t patch_length = 6000;
  bool use_skip_concat = true;
  bool use_additive_residual = true;
  std::vector<std::size_t> filters_down;
  std::vector<std::size_t> kernel_down;
  std::vector<std::size_t> filters_up;
  std::vector<std::size_t> kernel_up;
  std::size_t final_kernel = 9;

  static std::size_t default_filters(int b) { return std::min<std::size_t>(std::size_t{1} << (6 + b), 512); }
  static std::size_t default_kernel(int b) {
    return b >= 7 ? 9 : std::max<std::size_t>((std::size_t{1} << (7 - b)) + 1, 9);
  }

  /// Full-size schedule for `blocks` blocks.
  static ModelConfig standard(int blocks = 4) {
    if (blocks < 1) throw ConfigError("model: blocks must be >= 1");
    ModelConfig c;
    c.blocks = blocks;
    for (int b = 1; b <= blocks; ++b) {
      c.filters_down.push_back(default_filters(b));
      c.kernel_down.push_back(default_kernel(b));
    }
    c.mirror_up();
    return c;
  }

  /// Same schedule with every filter count divided by `divisor` (kept even, >= 2).
  ModelConfig with_width_divisor(std::size_t divisor) const {
    if (divisor == 0) throw ConfigError("model: width divisor must be >= 1");
    ModelConfig c = *this;
    for (auto& f : c.filters_down) f = std::max<std::size_t>(2, (f / divisor) & ~std::size_t{1});
    c.mirror_up();
    return c;
  }

  /// Sets filters_up / kernel_up to the mirror image of the down schedule.
  void mirror_up() {
    filters_up.assign(filters_down.rbegin(), filters_down.rend());
    kernel_up.assign(kernel_down.rbegin(), kernel_down.rend());
  }

  std::size_t length_multiple() const { return std::size_t{1} << blocks; }

  void validate() const {
    if (blocks < 1) throw ConfigError("model: blocks must be >= 1");
    const auto b = static_cast<std::size_t>(blocks);
    if (filters_down.size() != b || kernel_down.size() != b || filters_up.size() != b || kernel_up.size() != b) {
      throw ConfigError("model: every schedule needs exactly " + std::to_string(b) + " entries");
    }
    if (patch_length == 0 || patch_length % length_multiple() != 0) {
      throw ConfigError("model: patch_length " + std::to_string(patch_length) + " is not divisible by 2^" +
                        std::to_string(blocks));
    }
    for (std::size_t i = 0; i < b; ++i) {
      if (filters_down[i] == 0) throw ConfigError("model: empty down block");
      if (filters_up[i] == 0 || filters_up[i] % 2 != 0) throw ConfigError("model: up-block filter counts must be even");
      if (kernel_down[i] % 2 == 0 || kernel_up[i] % 2 == 0) throw ConfigError("model: kernel lengths must be odd");
    }
    if (final_kernel % 2 == 0) throw ConfigError("model: final kernel length must be odd");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"blocks", c.blocks},
                     {"patch_length", c.patch_length},
                     {"use_skip_concat", c.use_skip_concat},
                     {"use_additive_residual", c.use_additive_residual},
                     {"filters_down", c.filters_down},
                     {"kernel_down", c.kernel_down},
                     {"filters_up", c.filters_up},
                     {"kernel_up", c.kernel_up},
                     {"final_kernel", c.final_kernel}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("blocks").get_to(c.blocks);
  j.at("patch_length").get_to(c.patch_length);
  j.at("use_skip_concat").get_to(c.use_skip_concat);
  j.at("use_additive_residual").get_to(c.use_additive_residual);
  j.at("filters_down").get_to(c.filters_down);
  j.at("kernel_down").get_to(c.kernel_down);
  j.at("filters_up").get_to(c.filters_up);
  j.at("kernel_up").get_to(c.kernel_up);
  j.at("final_kernel").get_to(c.final_kernel);
}

enum class Ablation { full, no_residual, no_skip };

inline const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_residual: return "no_residual";
    case Ablation::no_skip: return "no_skip";
  }
  return "?";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no_residual" || s == "no-residual") return Ablation::no_residual;
  if (s == "no_skip" || s == "no-skip") return Ablation::no_skip;
  throw ConfigError("unknown ablation variant '" + s + "' (expected full, no_residual, no_skip)");
}

/// no_skip drops the skip concatenation on top of no_residual; filter
/// schedules are untouched, so the total filter count matches the full model.
inline ModelConfig apply_ablation(ModelConfig c, Ablation a) {
  c.use_additive_residual = a == Ablation::full;
  c.use_skip_concat = a != Ablation::no_skip;
  return c;
}

}  // namespace bwex
