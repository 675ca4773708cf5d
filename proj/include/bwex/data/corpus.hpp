#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "bwex/error.hpp"

namespace bwex {

/// Sorted list of *.wav files (case-insensitive extension) directly in `dir`.
inline std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("corpus directory '" + dir.string() + "' not found");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".wav") out.push_back(e.path());
  }
  if (ec) throw IoError("cannot list '" + dir.string() + "': " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

/// Uniform draw in [0, bound) by rejection; no modulo bias.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

/// Fisher-Yates permutation of 0..n-1. Spelled out rather than std::shuffle,
/// whose draw sequence is implementation-defined.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[bounded_draw(rng, i)]);
  return p;
}

struct CorpusSplit {
  std::vector<std::filesystem::path> train, val, test;
};

/// Shuffles the sorted list with `seed`; val and test sizes are floor(f * n),
/// the remainder goes to train. Each part is returned sorted.
inline CorpusSplit split_corpus(std::vector<std::filesystem::path> files, std::array<double, 3> fractions = {0.88, 0.06, 0.06},
                                std::uint64_t seed = 0) {
  if (files.empty()) throw DomainError("split_corpus: empty corpus");
  for (double f : fractions) {
    if (!(f >= 0.0)) throw DomainError("split_corpus: fractions must be non-negative");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) throw DomainError("split_corpus: fractions must sum to 1");
  std::sort(files.begin(), files.end());
  const std::size_t n = files.size();
  // Small epsilon so 0.06 * 100 lands on 6, not 5.999...
  const auto n_val = static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(n) + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(fractions[2] * static_cast<double>(n) + 1e-9));
  const auto perm = seeded_permutation(n, seed);
  CorpusSplit s;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = files[perm[i]];
    if (i < n_val) s.val.push_back(f);
    else if (i < n_val + n_test) s.test.push_back(f);
    else s.train.push_back(f);
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace bwex
