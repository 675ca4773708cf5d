#pragma once

// Spectrogram dumps: CSV of log10 power (one row per frame, one column per
// bin) and a binary PGM with time left to right and frequency bottom to top.
// Pixel = 255 * (dB + 100) / 100 with dB clipped to [-100, 0], where dB is
// 10 log10(|S|^2 / (sum w)^2), so a full-scale tone lands near -6 dB.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>

#include "bwex/audio/wav.hpp"
#include "bwex/dsp/stft.hpp"
#include "bwex/error.hpp"

namespace bwex {

struct SpectrogramOptions {
  std::size_t frame_length = 2048;
  std::size_t hop = 512;
};

struct SpectrogramImage {
  std::size_t width = 0, height = 0;  // frames, bins
  std::vector<std::uint8_t> pixels;   // row-major, row 0 = highest bin
};

inline double full_scale_db_offset(std::size_t frame_length) {
  const auto w = make_window(Window::hann, frame_length);
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  return 10.0 * std::log10(s * s);
}

inline SpectrogramImage render_spectrogram(const RealMatrix& log_pow, std::size_t frame_length) {
  const double off = full_scale_db_offset(frame_length);
  SpectrogramImage img{log_pow.rows, log_pow.cols, std::vector<std::uint8_t>(log_pow.rows * log_pow.cols)};
  for (std::size_t l = 0; l < log_pow.rows; ++l) {
    for (std::size_t k = 0; k < log_pow.cols; ++k) {
      const double db = std::clamp(10.0 * log_pow(l, k) - off, -100.0, 0.0);
      const auto px = static_cast<std::uint8_t>(std::lround(255.0 * (db + 100.0) / 100.0));
      img.pixels[(img.height - 1 - k) * img.width + l] = px;
    }
  }
  return img;
}

inline void write_pgm(const SpectrogramImage& img, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_log_power_csv(const RealMatrix& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  char buf[32];
  for (std::size_t l = 0; l < m.rows; ++l) {
    for (std::size_t k = 0; k < m.cols; ++k) {
      std::snprintf(buf, sizeof buf, "%.6f", m(l, k));
      if (k) f << ',';
      f << buf;
    }
    f << '\n';
  }
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

/// Writes `pgm_path` and the CSV next to it (same stem, .csv). Returns the
/// log-power matrix.
inline RealMatrix spectrogram_dump(const AudioBuffer& buf, const std::filesystem::path& pgm_path, const SpectrogramOptions& o = {}) {
  if (buf.size() < o.frame_length) {
    throw LengthError("spectrogram: need at least " + std::to_string(o.frame_length) + " samples, got " + std::to_string(buf.size()));
  }
  const auto lp = log_power(stft(buf.samples, o.frame_length, o.hop, Window::hann));
  write_pgm(render_spectrogram(lp, o.frame_length), pgm_path);
  auto csv = pgm_path;
  csv.replace_extension(".csv");
  write_log_power_csv(lp, csv);
  return lp;
}

}  // namespace bwex
