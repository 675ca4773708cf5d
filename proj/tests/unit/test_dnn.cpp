#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "bwex/baseline/spectral_dnn.hpp"
#include "bwex/data/synth.hpp"

using namespace bwex;
namespace fs = std::filesystem;

namespace {

double snr_db(std::span<const double> x, std::span<const double> ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += ref[i] * ref[i];
    den += (x[i] - ref[i]) * (x[i] - ref[i]);
  }
  return 10.0 * std::log10(num / den);
}

std::vector<double> track(SynthKind kind, int index, double seconds = 1.0) {
  SynthOptions o;
  o.kind = kind;
  o.duration_s = seconds;
  return synth_track(o, index).samples;
}

SpectralDNNConfig small_config(int r) {
  SpectralDNNConfig c;
  c.r = r;
  c.hidden = {128, 128, 128};
  return c;
}

}  // namespace

TEST(SpectralDNNConfig, Dimensions) {
  SpectralDNNConfig c;
  c.r = 2;
  EXPECT_EQ(c.num_bins(), 1025u);
  EXPECT_EQ(c.cutoff(), 512u);
  EXPECT_EQ(c.input_dim(), 1026u);
  EXPECT_EQ(c.output_dim(), 1024u);
  c.r = 4;
  EXPECT_EQ(c.input_dim(), 2u * 257u);
  EXPECT_EQ(c.output_dim(), 2u * 768u);
}

TEST(SpectralDNNConfig, RatioSixIsNotApplicable) {
  SpectralDNNConfig c;
  c.r = 6;
  EXPECT_THROW(c.validate(), DomainError);
  EXPECT_THROW(SpectralDNN<float>(c, 0), DomainError);
  c.r = 3;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(SpectralDNN, FullSizeParameterCount) {
  SpectralDNNConfig c;
  SpectralDNN<float> net(c, 0);
  const std::size_t expect = 1026 * 2048 + 2048 + 2 * (2048 * 2048 + 2048) + 2048 * 1024 + 1024;
  EXPECT_EQ(net.parameter_count(), expect);
}

TEST(SpectralDNN, PaddingCoversSignalWithFullFrames) {
  SpectralDNNConfig c;
  for (std::size_t n : {1u, 1000u, 2048u, 6000u, 16000u}) {
    const std::vector<double> x(n, 1.0);
    const auto f = pad_for_frames(x, c);
    EXPECT_EQ((f.padded.size() - c.frame_length) % c.hop, 0u);
    EXPECT_GE(f.padded.size(), c.hop + n + c.hop);
    EXPECT_EQ(f.padded[c.hop], 1.0);
  }
}

TEST(SpectralDNN, TrueHighBandRoundTrip) {
  // Input low bins and target high bins from the same signal: must give it back.
  const auto x = track(SynthKind::voiced, 0);
  for (int r : {2, 4}) {
    const auto c = small_config(r);
    const auto fs = pad_for_frames(x, c);
    const auto high = dnn_target_features(stft(fs.padded, c.frame_length, c.hop), c);
    const auto y = dnn_reconstruct(x, high, c);
    ASSERT_EQ(y.size(), x.size());
    double err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(y[i] - x[i]));
    EXPECT_LT(err, 1e-5) << "r=" << r;
  }
}

// Sum of tones on exact bins of a length-n FFT, so a whole-signal FFT
// low-pass is exact. Tones avoid +-64 Hz around the cutoff: within a few STFT
// bins of it the Hann main lobe spills high-band energy into the kept bins.
std::vector<double> bin_aligned_mixture(std::size_t n, int r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double hz_per_bin = 16000.0 / static_cast<double>(n);
  const double cutoff_hz = 8000.0 / r;
  std::vector<double> x(n, 0.0);
  for (int c = 0; c < 16; ++c) {
    std::size_t k;
    do {
      k = 20 + rng() % (n / 2 - 40);
    } while (std::abs(static_cast<double>(k) * hz_per_bin - cutoff_hz) < 64.0);
    const double a = 0.2 + 0.8 * nn::uniform01(rng), ph = 2 * std::numbers::pi * nn::uniform01(rng);
    for (std::size_t i = 0; i < n; ++i) x[i] += a * std::cos(2 * std::numbers::pi * static_cast<double>(k * i) / n + ph);
  }
  return x;
}

std::vector<double> ideal_lowpass(const std::vector<double>& x, int r) {
  auto half = rfft(x);
  for (std::size_t k = x.size() / (2 * static_cast<std::size_t>(r)) + 1; k < half.size(); ++k) half[k] = 0.0;
  return irfft(half, x.size());
}

TEST(SpectralDNN, OracleHighBandReconstructionSnr) {
  // High band removed exactly, low band intact; substituting the original's
  // high bins through the STFT path must reach 40 dB.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (int r : {2, 4}) {
      const auto x = bin_aligned_mixture(16384, r, seed);
      const auto low = ideal_lowpass(x, r);
      const auto c = small_config(r);
      const auto fs = pad_for_frames(x, c);
      const auto y = dnn_reconstruct(low, dnn_target_features(stft(fs.padded, c.frame_length, c.hop), c), c);
      EXPECT_LT(snr_db(low, x), 15.0) << "input must be missing real high-band energy";
      EXPECT_GE(snr_db(y, x), 40.0) << "seed " << seed << " r=" << r;
    }
  }
}

TEST(SpectralDNN, OracleHighBandImprovesSplineInput) {
  // Same substitution on the pipeline's spline input. The low band keeps the
  // spline and anti-alias filter error, so only improvement is required.
  for (auto kind : {SynthKind::voiced, SynthKind::noise_band}) {
    for (int r : {2, 4}) {
      const auto x = track(kind, 1);
      auto up = spline_upscale(decimate(x, r, true), r);
      up.resize(x.size());
      const auto c = small_config(r);
      const auto fs = pad_for_frames(x, c);
      const auto y = dnn_reconstruct(up, dnn_target_features(stft(fs.padded, c.frame_length, c.hop), c), c);
      EXPECT_GT(snr_db(y, x), snr_db(up, x)) << to_string(kind) << " r=" << r;
    }
  }
}

TEST(SpectralDNN, ZeroHighBandEqualsBrickWallLowPass) {
  const auto x = track(SynthKind::noise_band, 2);
  const auto c = small_config(4);
  const auto fs = pad_for_frames(x, c);
  auto spec = stft(fs.padded, c.frame_length, c.hop);
  const std::vector<float> zeros_logmag_phase = [&] {
    std::vector<float> v(spec.num_frames * c.output_dim(), 0.0f);
    const std::size_t half = c.output_dim() / 2;
    for (std::size_t l = 0; l < spec.num_frames; ++l) {
      for (std::size_t k = 0; k < half; ++k) v[l * c.output_dim() + k] = static_cast<float>(std::log(kLogMagEps));
    }
    return v;
  }();
  const auto y = dnn_reconstruct(x, zeros_logmag_phase, c);

  // Oracle: zero bins above the cutoff directly and invert.
  for (std::size_t l = 0; l < spec.num_frames; ++l) {
    for (std::size_t k = c.cutoff() + 1; k < spec.num_bins(); ++k) spec.at(l, k) = 0.0;
  }
  const auto full = istft(spec, fs.padded.size());
  double err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(y[i] - full[c.hop + i]));
  EXPECT_LT(err, 1e-6);
}

TEST(SpectralDNN, DatasetFramesMatchPadding) {
  const auto x = track(SynthKind::voiced, 3, 0.5);
  const auto c = small_config(2);
  DnnDataset ds;
  append_dnn_frames(ds, x, x, c);
  const auto fs = pad_for_frames(x, c);
  EXPECT_EQ(ds.size(), 1 + (fs.padded.size() - c.frame_length) / c.hop);
  EXPECT_EQ(ds.x.size(), ds.size() * c.input_dim());
  EXPECT_EQ(ds.y.size(), ds.size() * c.output_dim());
  EXPECT_THROW(append_dnn_frames(ds, x, std::span<const double>(x).first(100), c), LengthError);
}

TEST(SpectralDNN, OverfitsSixtyFourFrames) {
  // Full-size network (three 2048-unit hidden layers), 64 frames, 200 steps.
  SpectralDNNConfig c;
  c.r = 2;
  DnnDataset ds;
  for (int t = 0; ds.size() < 64; ++t) {
    const auto x = track(SynthKind::voiced, t, 1.0);
    auto up = spline_upscale(decimate(x, 2, true), 2);
    up.resize(x.size());
    append_dnn_frames(ds, up, x, c);
  }
  ds.x.resize(64 * ds.input_dim);
  ds.y.resize(64 * ds.output_dim);
  SpectralDNN<float> net(c, 1);
  net.fit_normalization(ds);
  DnnTrainOptions o;
  o.epochs = 50;  // 4 steps per epoch
  o.lr = 1e-4;
  o.seed = 2;
  const auto losses = train_dnn(net, ds, o);
  ASSERT_EQ(losses.size(), 200u);
  const double first = (losses[0] + losses[1] + losses[2] + losses[3]) / 4.0;
  const double last = (losses[196] + losses[197] + losses[198] + losses[199]) / 4.0;
  EXPECT_LE(last * 10.0, first) << "first " << first << " last " << last;
}

TEST(SpectralDNN, DeterministicAndCheckpointRoundTrip) {
  const auto c = small_config(4);
  DnnDataset ds;
  const auto x = track(SynthKind::voiced, 4, 1.0);
  auto up = spline_upscale(decimate(x, 4, true), 4);
  up.resize(x.size());
  append_dnn_frames(ds, up, x, c);
  auto run = [&] {
    SpectralDNN<float> net(c, 5);
    net.fit_normalization(ds);
    train_dnn(net, ds, {.epochs = 3, .batch = 4, .lr = 1e-3, .seed = 6});
    return net;
  };
  auto a = run();
  auto b = run();
  EXPECT_EQ(nn::encode_checkpoint(a.params()), nn::encode_checkpoint(b.params()));

  const auto dir = fs::temp_directory_path() / ("bwex_test_dnn_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  save_dnn(a, dir / "dnn.ckpt");
  EXPECT_EQ(checkpoint_model_type(dir / "dnn.ckpt"), "dnn");
  auto loaded = load_dnn<float>(dir / "dnn.ckpt");
  EXPECT_EQ(loaded.enhance(up), a.enhance(up));
  EXPECT_THROW(load_model<float>(dir / "dnn.ckpt"), ConfigError);
  fs::remove_all(dir);
}
