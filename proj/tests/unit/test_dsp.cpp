#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bwex/dsp/fft.hpp"
#include "bwex/dsp/iir.hpp"
#include "bwex/dsp/resample.hpp"
#include "bwex/dsp/stft.hpp"

using namespace bwex;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> white_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

double rms(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

// Chebyshev polynomial of the first kind, valid on the whole real line.
double cheb_t(int n, double x) {
  if (std::abs(x) <= 1.0) return std::cos(n * std::acos(x));
  const double s = (x > 0 || n % 2 == 0) ? 1.0 : -1.0;
  return s * std::cosh(n * std::acosh(std::abs(x)));
}

// Closed-form squared magnitude of the bilinear-mapped Chebyshev-I low-pass.
double cheby_oracle_db(int order, double ripple_db, double cutoff, double w) {
  const double eps2 = std::pow(10.0, ripple_db / 10.0) - 1.0;
  const double x = std::tan(kPi * w / 2.0) / std::tan(kPi * cutoff / 2.0);
  const double t = cheb_t(order, x);
  return -10.0 * std::log10(1.0 + eps2 * t * t);
}

std::vector<std::complex<double>> naive_dft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) acc += x[t] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k * t % n) / n);
    out[k] = acc;
  }
  return out;
}

double snr_db(std::span<const double> x, std::span<const double> ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += ref[i] * ref[i];
    den += (x[i] - ref[i]) * (x[i] - ref[i]);
  }
  return 10.0 * std::log10(num / den);
}

}  // namespace

// ---- FFT -------------------------------------------------------------------

TEST(Fft, MatchesNaiveDft) {
  for (std::size_t n : {1u, 2u, 8u, 64u, 256u}) {
    const auto x = white_noise(n, n);
    const auto ref = naive_dft(x);
    std::vector<std::complex<double>> buf(x.begin(), x.end());
    fft_inplace(buf);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(std::abs(buf[k] - ref[k]), 0.0, 1e-10) << n << ":" << k;
  }
}

TEST(Fft, InverseRoundTrip) {
  const auto x = white_noise(128, 3);
  const auto half = rfft(x);
  ASSERT_EQ(half.size(), 65u);
  const auto back = irfft(half, 128);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-12);
}

TEST(Fft, NonPowerOfTwoRejected) {
  std::vector<std::complex<double>> buf(6);
  EXPECT_THROW(fft_inplace(buf), DomainError);
}

// ---- Chebyshev design -------------------------------------------------------

TEST(Cheby1, DcGainEvenOrder) {
  const auto f = design_cheby1_lowpass(8, 0.05, 0.2);
  EXPECT_NEAR(std::abs(f.response(0.0)), std::pow(10.0, -0.05 / 20.0), 1e-9);
  EXPECT_NEAR(std::abs(f.response(0.0)), 0.99426, 1e-5);
  EXPECT_DOUBLE_EQ(f.a[0], 1.0);
  EXPECT_TRUE(f.is_stable());
}

TEST(Cheby1, CutoffGainEqualsRipple) {
  for (double c : {0.1, 0.2, 0.4, 0.5, 0.8}) {
    const auto f = design_cheby1_lowpass(8, 0.05, c);
    EXPECT_NEAR(f.gain_db(c), -0.05, 1e-3) << c;
  }
}

TEST(Cheby1, StopbandAtTwiceCutoff) {
  for (double c : {0.1, 0.2, 0.4}) {
    const auto f = design_cheby1_lowpass(8, 0.05, c);
    EXPECT_LT(f.gain_db(2.0 * c), -40.0) << c;
  }
}

TEST(Cheby1, MatchesClosedFormResponse) {
  for (int order : {1, 2, 5, 8}) {
    for (double c : {0.1, 0.25, 0.5}) {
      const auto f = design_cheby1_lowpass(order, 0.5, c);
      for (int i = 0; i < 200; ++i) {
        const double w = 0.0025 + i * 0.0049;
        const double want = cheby_oracle_db(order, 0.5, c, w);
        if (want < -200.0) continue;
        EXPECT_NEAR(f.gain_db(w), want, 1e-6 * std::max(1.0, std::abs(want))) << order << " " << c << " " << w;
      }
    }
  }
}

TEST(Cheby1, PassbandRippleBounded) {
  const auto f = design_cheby1_lowpass(8, 0.05, 0.3);
  for (int i = 0; i <= 300; ++i) {
    const double g = f.gain_db(0.3 * i / 300.0);
    EXPECT_LE(g, 1e-9);
    EXPECT_GE(g, -0.05 - 1e-9);
  }
}

TEST(Cheby1, RejectsBadArguments) {
  EXPECT_THROW(design_cheby1_lowpass(8, 0.05, 0.0), DomainError);
  EXPECT_THROW(design_cheby1_lowpass(8, 0.05, 1.0), DomainError);
  EXPECT_THROW(design_cheby1_lowpass(0, 0.05, 0.5), DomainError);
  EXPECT_THROW(design_cheby1_lowpass(8, 0.0, 0.5), DomainError);
}

TEST(Cheby1, UnitDcGainScaling) {
  const auto f = with_unit_dc_gain(design_cheby1_lowpass(8, 0.05, 0.2));
  EXPECT_NEAR(std::abs(f.response(0.0)), 1.0, 1e-12);
}

// ---- filtfilt ----------------------------------------------------------------

TEST(Filtfilt, DcPreserved) {
  const auto f = with_unit_dc_gain(design_cheby1_lowpass(8, 0.05, 0.5));
  const std::vector<double> x(500, 0.5);
  const auto y = filtfilt(f, x);
  ASSERT_EQ(y.size(), x.size());
  for (double v : y) EXPECT_NEAR(v, 0.5, 1e-6);
}

TEST(Filtfilt, StopbandSineSuppressed) {
  const auto f = design_cheby1_lowpass(8, 0.05, 0.5);
  std::vector<double> x(4000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(kPi * 0.95 * static_cast<double>(i));
  const auto y = filtfilt(f, x);
  EXPECT_LT(rms(y), 0.01 * rms(x));
}

TEST(Filtfilt, LengthPreservedAndShortInputRejected) {
  const auto f = design_cheby1_lowpass(8, 0.05, 0.5);
  for (std::size_t n : {25u, 100u, 1001u}) EXPECT_EQ(filtfilt(f, white_noise(n, n)).size(), n);
  EXPECT_THROW(filtfilt(f, white_noise(24, 1)), LengthError);
}

TEST(Filtfilt, PowerResponseIsSquaredMagnitude) {
  // Averaged periodograms: output / input power ~ |H|^2 for one pass of
  // filtfilt and |H|^4 for two passes.
  const auto f = design_cheby1_lowpass(8, 0.05, 0.5);
  const auto x = white_noise(1 << 18, 42);
  const auto y1 = filtfilt(f, x);
  const auto y2 = filtfilt(f, y1);
  const std::size_t n = 4096;
  const auto sx = stft(x, n, n / 2), s1 = stft(y1, n, n / 2), s2 = stft(y2, n, n / 2);
  for (std::size_t k = 1; k < n / 2; ++k) {
    const double w = static_cast<double>(k) / (n / 2.0);
    const double h2 = std::norm(f.response(w)) * std::norm(f.response(w));
    if (h2 < 0.1) continue;  // transition/stopband: power ratios are dominated by leakage
    double px = 0, p1 = 0, p2 = 0;
    for (std::size_t l = 0; l < sx.num_frames; ++l) {
      px += std::norm(sx.at(l, k));
      p1 += std::norm(s1.at(l, k));
      p2 += std::norm(s2.at(l, k));
    }
    EXPECT_NEAR(p1 / px, h2, 0.05 * h2) << k;
    EXPECT_NEAR(p2 / px, h2 * h2, 0.05 * h2 * h2) << k;
  }
}

TEST(Filtfilt, ZeroGroupDelay) {
  const auto f = design_cheby1_lowpass(8, 0.05, 0.3);
  const auto x = filtfilt(design_cheby1_lowpass(4, 0.5, 0.25), white_noise(8192, 5));
  const auto y = filtfilt(f, x);
  int best_lag = 99;
  double best = -1e300;
  for (int lag = -20; lag <= 20; ++lag) {
    double c = 0.0;
    for (int i = 100; i < 8000; ++i) c += x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i + lag)];
    if (c > best) {
      best = c;
      best_lag = lag;
    }
  }
  EXPECT_EQ(best_lag, 0);
}

// ---- decimate / spline -------------------------------------------------------

TEST(Decimate, RateAndLength) {
  AudioBuffer buf{white_noise(16000, 1), 16000};
  const auto low = decimate(buf, 4, true);
  EXPECT_EQ(low.sample_rate, 4000);
  EXPECT_EQ(low.size(), 4000u);
  const std::vector<double> x(6000, 0.0);
  EXPECT_EQ(decimate(std::span<const double>(x), 4, false).size(), 1500u);
  EXPECT_EQ(decimate(std::span<const double>(x), 4, true).size(), 1500u);
}

TEST(Decimate, ConstantInvariant) {
  const std::vector<double> x(1000, -0.3);
  for (int r : {2, 3, 4, 6}) {
    for (bool lpf : {false, true}) {
      for (double v : decimate(std::span<const double>(x), r, lpf)) EXPECT_NEAR(v, -0.3, 1e-9);
    }
  }
}

TEST(Decimate, WithoutFilterTakesEveryRth) {
  const auto x = white_noise(100, 9);
  const auto y = decimate(std::span<const double>(x), 3, false);
  ASSERT_EQ(y.size(), 34u);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], x[3 * i]);
}

TEST(Decimate, BadRatioRejected) {
  const std::vector<double> x(100, 0.0);
  EXPECT_THROW(decimate(std::span<const double>(x), 1, true), DomainError);
  EXPECT_THROW(decimate(AudioBuffer{x, 16000}, 3, true), DomainError);
}

TEST(Spline, LinearRampReproduced) {
  const std::vector<double> x{0, 1, 2, 3};
  const auto y = spline_upscale(std::span<const double>(x), 2);
  const std::vector<double> want{0, 0.5, 1, 1.5, 2, 2.5, 3, 3.5};
  ASSERT_EQ(y.size(), want.size());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-12);
}

TEST(Spline, ConstantReproduced) {
  const std::vector<double> x(10, 0.7);
  for (double v : spline_upscale(std::span<const double>(x), 4)) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(Spline, NodeIdentity) {
  const auto x = white_noise(64, 17);
  for (int r : {2, 3, 4}) {
    const auto y = spline_upscale(std::span<const double>(x), r);
    ASSERT_EQ(y.size(), 64u * r);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[r * i], x[i], 1e-12);
    const auto back = decimate(std::span<const double>(y), r, false);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-12);
  }
}

TEST(Spline, MatchesDenseNaturalSplineSolve) {
  // Independent oracle: solve the full natural-spline system with Eigen.
  const auto x = white_noise(12, 23);
  const std::size_t n = x.size();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  a(0, 0) = a(n - 1, n - 1) = 1.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    a(i, i - 1) = 1.0;
    a(i, i) = 4.0;
    a(i, i + 1) = 1.0;
    rhs(i) = 6.0 * (x[i + 1] - 2.0 * x[i] + x[i - 1]);
  }
  const Eigen::VectorXd m = a.lu().solve(rhs);
  const auto y = spline_upscale(std::span<const double>(x), 4);
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double t_abs = j / 4.0;
    const std::size_t p = std::min<std::size_t>(static_cast<std::size_t>(t_abs), n - 2);
    const double t = t_abs - p;
    // Cubic in Hermite-free form: value + slope + curvature terms.
    const double slope = x[p + 1] - x[p] - (2.0 * m(p) + m(p + 1)) / 6.0;
    const double want = x[p] + slope * t + m(p) / 2.0 * t * t + (m(p + 1) - m(p)) / 6.0 * t * t * t;
    EXPECT_NEAR(y[j], want, 1e-12) << j;
  }
}

TEST(Spline, ShortInputRejected) {
  const std::vector<double> x{1, 2, 3};
  EXPECT_THROW(spline_upscale(std::span<const double>(x), 2), LengthError);
}

TEST(Spline, BandLimitedRoundTripSnr) {
  AudioBuffer hi{std::vector<double>(16000), 16000};
  for (std::size_t i = 0; i < hi.size(); ++i) {
    const double t = static_cast<double>(i) / 16000.0;
    hi.samples[i] = 0.4 * std::sin(2 * kPi * 220 * t) + 0.3 * std::sin(2 * kPi * 530 * t + 1.0) +
                    0.2 * std::sin(2 * kPi * 870 * t + 2.0);
  }
  for (bool lpf : {false, true}) {
    const auto up = spline_upscale(decimate(hi, 4, lpf), 4);
    ASSERT_EQ(up.sample_rate, 16000);
    ASSERT_EQ(up.size(), hi.size());
    EXPECT_GE(snr_db(up.samples, hi.samples), 30.0) << lpf;
  }
}

// ---- STFT ----------------------------------------------------------------------

TEST(Stft, FrameCount) {
  const std::vector<double> x(5000, 0.0);
  const auto s = stft(x, 1024, 256);
  EXPECT_EQ(s.num_frames, 1 + (5000 - 1024) / 256);
  EXPECT_EQ(s.num_bins(), 513u);
  EXPECT_THROW(stft(x, 1000, 256), DomainError);
  EXPECT_THROW(stft(std::vector<double>(100), 128, 64), LengthError);
}

TEST(Stft, CosineAtBinConcentrates) {
  const std::size_t n = 256, k0 = 19;
  std::vector<double> x(1024);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(2.0 * kPi * k0 * i / n);
  const auto s = stft(x, n, n, Window::rectangular);
  for (std::size_t l = 0; l < s.num_frames; ++l) {
    const double peak = std::abs(s.at(l, k0));
    EXPECT_NEAR(peak, n / 2.0, 1e-9);
    for (std::size_t k = 0; k < s.num_bins(); ++k) {
      if (k != k0) EXPECT_LT(std::abs(s.at(l, k)) / peak, 1e-9);
    }
  }
}

TEST(Stft, ZerosGiveZeros) {
  const auto s = stft(std::vector<double>(2048, 0.0), 512, 256);
  for (const auto& c : s.bins) EXPECT_EQ(std::abs(c), 0.0);
}

TEST(Stft, Parseval) {
  const auto x = white_noise(4096, 31);
  const std::size_t n = 1024;
  const auto s = stft(x, n, 384);
  const auto w = make_window(Window::hann, n);
  for (std::size_t l = 0; l < s.num_frames; ++l) {
    double time = 0.0;
    for (std::size_t i = 0; i < n; ++i) time += std::pow(x[l * 384 + i] * w[i], 2);
    // Reconstruct the two-sided sum from the one-sided bins.
    double freq = std::norm(s.at(l, 0)) + std::norm(s.at(l, n / 2));
    for (std::size_t k = 1; k < n / 2; ++k) freq += 2.0 * std::norm(s.at(l, k));
    EXPECT_NEAR(time, freq / n, 1e-9 * time);
  }
}

TEST(Stft, OverlapAddInverse) {
  const auto x = white_noise(4096, 8);
  const auto s = stft(x, 512, 256);
  const auto y = istft(s, x.size());
  for (std::size_t i = 1; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-9) << i;
}

TEST(LogPower, Examples) {
  Spectrogram s;
  s.frame_length = 4;
  s.hop = 4;
  s.num_frames = 1;
  s.bins = {1.0, {0.0, 10.0}, 0.0};
  const auto x = log_power(s);
  EXPECT_DOUBLE_EQ(x(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(x(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(x(0, 2), -10.0);
  EXPECT_DOUBLE_EQ(log_power(s, 1e-4)(0, 2), -4.0);
  EXPECT_THROW(log_power(s, 0.0), DomainError);
}
