#pragma once

// Seeded synthetic corpora standing in for recorded speech/music.
//
//   sine_mixture  3-6 sinusoids, frequencies uniform in [50, band_limit_hz]
//   chirp         linear sweep from 0 Hz to Nyquist over the track
//   noise_band    Gaussian noise restricted to a random band (FFT masking)
//   voiced        harmonic source with drifting f0 (100-250 Hz), coherent
//                 harmonic phases, three formant resonances and a syllable-rate
//                 amplitude envelope; harmonics stop below 0.95 * Nyquist
//
// Every track is normalized to a peak of 0.5 and written as float32 WAV.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "bwex/audio/wav.hpp"
#include "bwex/dsp/fft.hpp"
#include "bwex/error.hpp"
#include "bwex/nn/param_store.hpp"

namespace bwex {

enum class SynthKind { sine_mixture, chirp, noise_band, voiced };

inline const char* to_string(SynthKind k) {
  switch (k) {
    case SynthKind::sine_mixture: return "sine-mixture";
    case SynthKind::chirp: return "chirp";
    case SynthKind::noise_band: return "noise-band";
    case SynthKind::voiced: return "voiced";
  }
  return "?";
}

inline SynthKind parse_synth_kind(const std::string& s) {
  if (s == "sine-mixture" || s == "sine_mixture") return SynthKind::sine_mixture;
  if (s == "chirp") return SynthKind::chirp;
  if (s == "noise-band" || s == "noise_band") return SynthKind::noise_band;
  if (s == "voiced") return SynthKind::voiced;
  throw ConfigError("unknown synth kind '" + s + "' (expected sine-mixture, chirp, noise-band, voiced)");
}

struct SynthOptions {
  SynthKind kind = SynthKind::voiced;
  int n_tracks = 20;
  double duration_s = 2.0;
  int sample_rate = 16000;
  std::uint64_t seed = 0;
  double band_limit_hz = 0.0;  // sine-mixture / noise-band upper edge; 0 = 0.45 * rate
};

namespace detail {

// Per-track generator: independent of how many tracks precede it.
inline std::mt19937_64 track_rng(std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5EEDu};
  return std::mt19937_64(seq);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * nn::uniform01(rng); }

inline double gaussian(std::mt19937_64& rng) {
  const double u1 = std::max(nn::uniform01(rng), 1e-300);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * nn::uniform01(rng));
}

inline void normalize_peak(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0) {
    for (auto& v : x) v *= peak / m;
  }
}

inline std::vector<double> synth_sine_mixture(std::mt19937_64& rng, std::size_t n, double rate, double limit) {
  const int count = 3 + static_cast<int>(rng() % 4);
  std::vector<double> x(n, 0.0);
  for (int c = 0; c < count; ++c) {
    const double f = uniform(rng, 50.0, limit);
    const double a = uniform(rng, 0.2, 1.0);
    const double ph = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) x[i] += a * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / rate + ph);
  }
  return x;
}

inline std::vector<double> synth_chirp(std::mt19937_64& rng, std::size_t n, double rate) {
  // f(t) = (rate / 2) * t / T, phase = pi * rate * t^2 / (2 T).
  const double total = static_cast<double>(n) / rate;
  const double ph0 = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    x[i] = std::sin(std::numbers::pi * rate * t * t / (2.0 * total) + ph0);
  }
  return x;
}

inline std::vector<double> synth_noise_band(std::mt19937_64& rng, std::size_t n, double rate, double limit) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  const double lo = uniform(rng, 50.0, 0.5 * limit);
  const double hi = uniform(rng, lo + 0.25 * (limit - lo), limit);
  std::vector<std::complex<double>> half(m / 2 + 1, 0.0);
  for (std::size_t k = 1; k < half.size(); ++k) {
    const double f = static_cast<double>(k) * rate / static_cast<double>(m);
    const double re = gaussian(rng), im = gaussian(rng);
    if (f >= lo && f <= hi) half[k] = {re, im};
  }
  auto x = irfft(half, m);
  x.resize(n);
  return x;
}

inline std::vector<double> synth_voiced(std::mt19937_64& rng, std::size_t n, double rate) {
  const double pi = std::numbers::pi;
  const double f0_base = uniform(rng, 100.0, 250.0);
  const double drift = uniform(rng, -0.15, 0.15);                 // relative f0 change over the track
  const double vib_rate = uniform(rng, 3.0, 6.0), vib_depth = uniform(rng, 0.01, 0.04);
  const double vib_phase = uniform(rng, 0.0, 2.0 * pi);
  const double formant[3] = {uniform(rng, 300.0, 900.0), uniform(rng, 900.0, 2500.0), uniform(rng, 2500.0, 3500.0)};
  const double width[3] = {uniform(rng, 80.0, 160.0), uniform(rng, 100.0, 250.0), uniform(rng, 150.0, 350.0)};
  const double gain[3] = {1.0, uniform(rng, 0.4, 0.8), uniform(rng, 0.2, 0.5)};
  const double syllable_rate = uniform(rng, 2.5, 5.0), syllable_phase = uniform(rng, 0.0, pi);
  const double tilt = uniform(rng, 0.6, 1.0);
  const double nyq_limit = 0.95 * rate / 2.0;
  const double f0_max = f0_base * (1.0 + std::abs(drift)) * (1.0 + vib_depth);
  const int harmonics = std::max(1, static_cast<int>(std::floor(nyq_limit / f0_max)));

  auto envelope = [&](double f) {
    double e = 0.02;  // floor so no harmonic vanishes entirely
    for (int j = 0; j < 3; ++j) e += gain[j] * std::exp(-0.5 * std::pow((f - formant[j]) / width[j], 2.0));
    return e * std::pow(f0_base / std::max(f, f0_base), tilt * 0.5);
  };

  std::vector<double> x(n, 0.0);
  const double total = static_cast<double>(n) / rate;
  double phase = uniform(rng, 0.0, 2.0 * pi);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double f0 = f0_base * (1.0 + drift * t / total) * (1.0 + vib_depth * std::sin(2.0 * pi * vib_rate * t + vib_phase));
    double s = 0.0;
    for (int k = 1; k <= harmonics; ++k) s += envelope(k * f0) * std::cos(k * phase);
    const double amp = 0.25 + 0.75 * std::pow(std::sin(pi * syllable_rate * t + syllable_phase), 2.0);
    x[i] = amp * s;
    phase += 2.0 * pi * f0 / rate;
  }
  return x;
}

}  // namespace detail

/// Track `index` of a corpus; deterministic in (options, index).
inline AudioBuffer synth_track(const SynthOptions& o, int index) {
  if (o.sample_rate <= 0) throw ConfigError("synth: sample rate must be positive");
  if (!(o.duration_s > 0.0)) throw ConfigError("synth: duration must be positive");
  const auto n = static_cast<std::size_t>(std::llround(o.duration_s * o.sample_rate));
  const double rate = o.sample_rate;
  const double limit = o.band_limit_hz > 0.0 ? std::min(o.band_limit_hz, 0.5 * rate) : 0.45 * rate;
  auto rng = detail::track_rng(o.seed, index);
  std::vector<double> x;
  switch (o.kind) {
    case SynthKind::sine_mixture: x = detail::synth_sine_mixture(rng, n, rate, limit); break;
    case SynthKind::chirp: x = detail::synth_chirp(rng, n, rate); break;
    case SynthKind::noise_band: x = detail::synth_noise_band(rng, n, rate, limit); break;
    case SynthKind::voiced: x = detail::synth_voiced(rng, n, rate); break;
  }
  detail::normalize_peak(x, 0.5);
  return {std::move(x), o.sample_rate};
}

inline std::string synth_track_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "track_%04d.wav", index);
  return buf;
}

/// Writes n_tracks float32 WAV files plus corpus.json into `dir`. Returns the
/// written paths in index order.
inline std::vector<std::filesystem::path> synth_corpus(const SynthOptions& o, const std::filesystem::path& dir) {
  if (o.n_tracks < 1) throw ConfigError("synth: need at least one track");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> out;
  for (int i = 0; i < o.n_tracks; ++i) {
    out.push_back(dir / synth_track_name(i));
    write_wav(synth_track(o, i), out.back(), WavEncoding::float32);
  }
  nlohmann::json meta{{"schema", "bwex.corpus/1"},
                      {"kind", to_string(o.kind)},
                      {"n_tracks", o.n_tracks},
                      {"duration_s", o.duration_s},
                      {"sample_rate", o.sample_rate},
                      {"seed", o.seed},
                      {"band_limit_hz", o.band_limit_hz}};
  std::ofstream(dir / "corpus.json") << meta.dump(2) << '\n';
  return out;
}

}  // namespace bwex
