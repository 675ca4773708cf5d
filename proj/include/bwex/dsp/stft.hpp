#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "bwex/dsp/fft.hpp"
#include "bwex/error.hpp"

namespace bwex {

enum class Window { hann, rectangular };

/// Periodic window of length n (the periodic Hann satisfies COLA at hop n/2).
inline std::vector<double> make_window(Window w, std::size_t n) {
  std::vector<double> out(n, 1.0);
  if (w == Window::hann) {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
  }
  return out;
}

/// Dense row-major real matrix; rows are frames, columns frequency bins.
struct RealMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// One-sided STFT: L frames by K = frame_length/2 + 1 bins.
struct Spectrogram {
  std::size_t frame_length = 0;
  std::size_t hop = 0;
  Window window = Window::hann;
  std::size_t num_frames = 0;
  std::vector<std::complex<double>> bins;

  std::size_t num_bins() const noexcept { return frame_length / 2 + 1; }
  std::complex<double>& at(std::size_t frame, std::size_t k) { return bins[frame * num_bins() + k]; }
  const std::complex<double>& at(std::size_t frame, std::size_t k) const { return bins[frame * num_bins() + k]; }
  std::span<std::complex<double>> frame(std::size_t l) { return {bins.data() + l * num_bins(), num_bins()}; }
  std::span<const std::complex<double>> frame(std::size_t l) const { return {bins.data() + l * num_bins(), num_bins()}; }
};

/// Frames start at 0, hop, 2*hop, ...; no centering and no padding, so
/// L = 1 + floor((len - frame_length) / hop).
inline Spectrogram stft(std::span<const double> x, std::size_t frame_length, std::size_t hop,
                        Window window = Window::hann) {
  if (!is_power_of_two(frame_length)) {
    throw DomainError("stft: frame length " + std::to_string(frame_length) + " is not a power of two");
  }
  if (hop == 0) throw DomainError("stft: hop must be >= 1");
  if (x.size() < frame_length) {
    throw LengthError("stft: signal length " + std::to_string(x.size()) + " shorter than frame " +
                      std::to_string(frame_length));
  }
  Spectrogram spec;
  spec.frame_length = frame_length;
  spec.hop = hop;
  spec.window = window;
  spec.num_frames = 1 + (x.size() - frame_length) / hop;
  spec.bins.resize(spec.num_frames * spec.num_bins());

  const auto w = make_window(window, frame_length);
  std::vector<std::complex<double>> buf(frame_length);
  for (std::size_t l = 0; l < spec.num_frames; ++l) {
    const std::size_t start = l * hop;
    for (std::size_t i = 0; i < frame_length; ++i) buf[i] = x[start + i] * w[i];
    fft_inplace(buf);
    std::copy_n(buf.begin(), spec.num_bins(), spec.frame(l).begin());
  }
  return spec;
}

/// Weighted overlap-add inverse: x = sum(w * frame) / sum(w^2). Samples no
/// frame covers with non-zero weight are returned as 0.
inline std::vector<double> istft(const Spectrogram& spec, std::size_t length) {
  const std::size_t n = spec.frame_length;
  const auto w = make_window(spec.window, n);
  const std::size_t span_len = (spec.num_frames - 1) * spec.hop + n;
  std::vector<double> acc(std::max(length, span_len), 0.0), norm(acc.size(), 0.0);
  for (std::size_t l = 0; l < spec.num_frames; ++l) {
    const auto frame = irfft(spec.frame(l), n);
    const std::size_t start = l * spec.hop;
    for (std::size_t i = 0; i < n; ++i) {
      acc[start + i] += frame[i] * w[i];
      norm[start + i] += w[i] * w[i];
    }
  }
  std::vector<double> out(length, 0.0);
  for (std::size_t i = 0; i < length; ++i) out[i] = norm[i] > 1e-12 ? acc[i] / norm[i] : 0.0;
  return out;
}

/// X(l, k) = log10(max(|S(l, k)|^2, floor)).
inline RealMatrix log_power(const Spectrogram& spec, double floor = 1e-10) {
  if (!(floor > 0.0)) throw DomainError("log_power: floor must be positive");
  RealMatrix x{spec.num_frames, spec.num_bins(), std::vector<double>(spec.bins.size())};
  for (std::size_t i = 0; i < spec.bins.size(); ++i) x.data[i] = std::log10(std::max(std::norm(spec.bins[i]), floor));
  return x;
}

}  // namespace bwex
