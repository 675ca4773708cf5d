#pragma once

// Pure data-movement ops: the 1D subpixel shuffle and channel concatenation.
// Each backward is the inverse permutation / split of its forward.

#include <algorithm>
#include <utility>

#include "bwex/nn/tensor.hpp"

namespace bwex::nn {

/// (N, F, d) -> (N, F/2, 2d) with out[n, c, 2t + j] = x[n, 2c + j, t].
template <typename T>
Tensor<T> subpixel_shuffle_1d(const Tensor<T>& x) {
  require_rank3(x, "subpixel shuffle");
  if (x.channels() % 2 != 0) {
    throw ShapeError("subpixel shuffle: channel axis must be even, got " + std::to_string(x.channels()));
  }
  const std::size_t n_b = x.batch(), half = x.channels() / 2, d = x.length();
  Tensor<T> out({n_b, half, 2 * d});
  for (std::size_t n = 0; n < n_b; ++n) {
    for (std::size_t c = 0; c < half; ++c) {
      const T* even = x.row(n, 2 * c);
      const T* odd = x.row(n, 2 * c + 1);
      T* dst = out.row(n, c);
      for (std::size_t t = 0; t < d; ++t) {
        dst[2 * t] = even[t];
        dst[2 * t + 1] = odd[t];
      }
    }
  }
  return out;
}

/// Inverse of subpixel_shuffle_1d: (N, F, 2d) -> (N, 2F, d). Also its adjoint.
template <typename T>
Tensor<T> subpixel_unshuffle_1d(const Tensor<T>& y) {
  require_rank3(y, "subpixel unshuffle");
  if (y.length() % 2 != 0) throw ShapeError("subpixel unshuffle: length axis must be even, got " + std::to_string(y.length()));
  const std::size_t n_b = y.batch(), ch = y.channels(), d = y.length() / 2;
  Tensor<T> out({n_b, 2 * ch, d});
  for (std::size_t n = 0; n < n_b; ++n) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T* src = y.row(n, c);
      T* even = out.row(n, 2 * c);
      T* odd = out.row(n, 2 * c + 1);
      for (std::size_t t = 0; t < d; ++t) {
        even[t] = src[2 * t];
        odd[t] = src[2 * t + 1];
      }
    }
  }
  return out;
}

/// Stacks b's channels after a's. Batch and length axes must agree.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank3(a, "concat");
  require_rank3(b, "concat");
  if (a.batch() != b.batch()) throw ShapeError("concat: batch axis mismatch");
  if (a.length() != b.length()) {
    throw ShapeError("concat: length axis mismatch (" + std::to_string(a.length()) + " vs " + std::to_string(b.length()) + ")");
  }
  const std::size_t fa = a.channels(), fb = b.channels(), d = a.length();
  Tensor<T> out({a.batch(), fa + fb, d});
  for (std::size_t n = 0; n < a.batch(); ++n) {
    if (fa) std::copy_n(a.row(n, 0), fa * d, out.row(n, 0));
    if (fb) std::copy_n(b.row(n, 0), fb * d, out.row(n, fa));
  }
  return out;
}

/// Adjoint of concat_channels: the first `first_channels` channels and the rest.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& g, std::size_t first_channels) {
  require_rank3(g, "split");
  if (first_channels > g.channels()) throw ShapeError("split: channel axis smaller than split point");
  const std::size_t fa = first_channels, fb = g.channels() - fa, d = g.length();
  Tensor<T> a({g.batch(), fa, d}), b({g.batch(), fb, d});
  for (std::size_t n = 0; n < g.batch(); ++n) {
    if (fa) std::copy_n(g.row(n, 0), fa * d, a.row(n, 0));
    if (fb) std::copy_n(g.row(n, fa), fb * d, b.row(n, 0));
  }
  return {std::move(a), std::move(b)};
}

}  // namespace bwex::nn
