#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>

#include "bwex/data/archive.hpp"
#include "bwex/data/corpus.hpp"
#include "bwex/data/synth.hpp"
#include "bwex/dsp/stft.hpp"

using namespace bwex;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("bwex_test_data_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<fs::path> fake_files(int n) {
  std::vector<fs::path> v;
  for (int i = 0; i < n; ++i) v.push_back("f" + std::to_string(1000 + i) + ".wav");
  return v;
}

std::vector<double> sine(std::size_t n, double f, double rate, double amp = 0.5) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = amp * std::sin(2 * kPi * f * static_cast<double>(i) / rate);
  return v;
}

}  // namespace

TEST(SplitCorpus, HundredFilesSplit88_6_6) {
  const auto s = split_corpus(fake_files(100));
  EXPECT_EQ(s.train.size(), 88u);
  EXPECT_EQ(s.val.size(), 6u);
  EXPECT_EQ(s.test.size(), 6u);
  std::set<fs::path> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), 100u);
}

TEST(SplitCorpus, AllTrain) {
  const auto s = split_corpus(fake_files(7), {1.0, 0.0, 0.0});
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_TRUE(s.val.empty());
  EXPECT_TRUE(s.test.empty());
}

TEST(SplitCorpus, RemainderGoesToTrain) {
  const auto s = split_corpus(fake_files(20));
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
  EXPECT_EQ(s.train.size(), 18u);
}

TEST(SplitCorpus, SeedDeterminesSplitAndInputOrderDoesNot) {
  auto files = fake_files(50);
  const auto a = split_corpus(files, {0.8, 0.1, 0.1}, 7);
  std::reverse(files.begin(), files.end());
  const auto b = split_corpus(files, {0.8, 0.1, 0.1}, 7);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.test, b.test);
  const auto c = split_corpus(files, {0.8, 0.1, 0.1}, 8);
  EXPECT_NE(a.val, c.val);
}

TEST(SplitCorpus, Errors) {
  EXPECT_THROW(split_corpus({}), DomainError);
  EXPECT_THROW(split_corpus(fake_files(3), {0.5, 0.2, 0.2}), DomainError);
  EXPECT_THROW(split_corpus(fake_files(3), {1.2, -0.1, -0.1}), DomainError);
}

TEST(SeededPermutation, IsPermutationAndRoughlyUniform) {
  // Position of element 0 over many seeds: chi-square-ish bound on 5 cells.
  std::array<int, 5> hits{};
  for (std::uint64_t s = 0; s < 5000; ++s) {
    const auto p = seeded_permutation(5, s);
    std::set<std::size_t> u(p.begin(), p.end());
    ASSERT_EQ(u.size(), 5u);
    hits[std::find(p.begin(), p.end(), 0u) - p.begin()]++;
  }
  for (int h : hits) EXPECT_NEAR(h, 1000, 150);
}

TEST(Synth, SameSeedBitIdenticalCorpus) {
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  SynthOptions o;
  o.n_tracks = 3;
  o.duration_s = 0.25;
  o.seed = 11;
  const auto fa = synth_corpus(o, a);
  const auto fb = synth_corpus(o, b);
  ASSERT_EQ(fa.size(), 3u);
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(bytes_of(fa[i]), bytes_of(fb[i]));
  EXPECT_EQ(bytes_of(a / "corpus.json"), bytes_of(b / "corpus.json"));
  o.seed = 12;
  EXPECT_NE(synth_track(o, 0).samples, read_wav(fa[0]).samples);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Synth, BandLimitedSineMixtureHasNoEnergyAbove2kHz) {
  SynthOptions o;
  o.kind = SynthKind::sine_mixture;
  o.band_limit_hz = 2000.0;
  o.duration_s = 1.0;
  for (int t = 0; t < 5; ++t) {
    const auto x = synth_track(o, t);
    const auto spec = stft(x.samples, 2048, 1024);
    double above = 0.0, total = 0.0;
    for (std::size_t l = 0; l < spec.num_frames; ++l) {
      for (std::size_t k = 0; k < spec.num_bins(); ++k) {
        const double p = std::norm(spec.at(l, k));
        const double f = static_cast<double>(k) * 16000.0 / 2048.0;
        total += p;
        if (f > 2200.0) above += p;  // 200 Hz margin for Hann main lobe and sidelobes
      }
    }
    EXPECT_LT(above / total, 1e-8) << "track " << t;
  }
}

TEST(Synth, ChirpRidgeSlopeMatchesLinearSweep) {
  SynthOptions o;
  o.kind = SynthKind::chirp;
  o.duration_s = 2.0;
  const auto x = synth_track(o, 0);
  const std::size_t frame = 1024, hop = 256;
  const auto spec = stft(x.samples, frame, hop);
  // Least-squares line through (frame-centre time, peak frequency), skipping
  // the first and last 10% where the ridge meets DC and Nyquist.
  double st = 0, sf = 0, stt = 0, stf = 0;
  int n = 0;
  for (std::size_t l = 0; l < spec.num_frames; ++l) {
    const double t = (static_cast<double>(l * hop) + frame / 2.0) / 16000.0;
    if (t < 0.2 || t > 1.8) continue;
    std::size_t best = 0;
    for (std::size_t k = 1; k < spec.num_bins(); ++k) {
      if (std::abs(spec.at(l, k)) > std::abs(spec.at(l, best))) best = k;
    }
    const double f = static_cast<double>(best) * 16000.0 / frame;
    st += t, sf += f, stt += t * t, stf += t * f;
    ++n;
  }
  const double slope = (n * stf - st * sf) / (n * stt - st * st);
  const double expected = 8000.0 / 2.0;  // Nyquist over the track duration
  EXPECT_NEAR(slope / expected, 1.0, 0.02);
}

TEST(Synth, VoicedStaysBelowNyquistMargin) {
  SynthOptions o;
  o.kind = SynthKind::voiced;
  o.duration_s = 1.0;
  const auto x = synth_track(o, 3);
  double peak = 0.0;
  for (double v : x.samples) peak = std::max(peak, std::abs(v));
  EXPECT_NEAR(peak, 0.5, 1e-12);
  const auto spec = stft(x.samples, 2048, 2048);
  double above = 0.0, total = 0.0;
  for (std::size_t l = 0; l < spec.num_frames; ++l) {
    for (std::size_t k = 0; k < spec.num_bins(); ++k) {
      const double p = std::norm(spec.at(l, k));
      total += p;
      if (k * 16000.0 / 2048.0 > 0.96 * 8000.0) above += p;
    }
  }
  EXPECT_LT(above / total, 1e-6);
}

TEST(Synth, UnknownKindRejected) { EXPECT_THROW(parse_synth_kind("pink"), ConfigError); }

TEST(Patches, OneSecondTrackGivesFourWindows) {
  const auto x = sine(16000, 440.0, 16000.0);
  const auto a = make_track_patches(x, 4, 6000, 3000, true);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 6000; j += 997) EXPECT_EQ(a.target(i)[j], static_cast<float>(x[3000 * i + j]));
  }
}

TEST(Patches, InputIsSplineOfDecimatedTrack) {
  const auto x = sine(12000, 1300.0, 16000.0);
  const auto a = make_track_patches(x, 4, 4000, 2000, true);
  const auto up = spline_upscale(decimate(x, 4, true), 4);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < 4000; ++j) ASSERT_EQ(a.input(i)[j], static_cast<float>(up[2000 * i + j]));
  }
}

TEST(Patches, SplineNodeIdentityWithoutFilter) {
  const auto x = sine(16000, 3100.0, 16000.0);
  for (int r : {2, 4, 6}) {
    const auto a = make_track_patches(x, r, 6000, 3000, false);
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < 6000; ++j) {
        if ((3000 * i + j) % static_cast<std::size_t>(r) == 0) {
          ASSERT_EQ(a.input(i)[j], a.target(i)[j]) << "r=" << r;
        }
      }
    }
  }
}

TEST(Patches, LpfAndNoLpfDiffer) {
  // A 7 kHz tone aliases at r=4 without the filter and is removed with it.
  const auto x = sine(16000, 7000.0, 16000.0);
  const auto a = make_track_patches(x, 4, 6000, 3000, true);
  const auto b = make_track_patches(x, 4, 6000, 3000, false);
  EXPECT_NE(a.inputs, b.inputs);
  EXPECT_EQ(a.targets, b.targets);
  double ea = 0.0, eb = 0.0;
  for (float v : a.inputs) ea += v * v;
  for (float v : b.inputs) eb += v * v;
  EXPECT_LT(ea, 1e-3 * eb);
}

class ArchiveTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = scratch(::testing::UnitTest::GetInstance()->current_test_info()->name());
    corpus = dir / "corpus";
    SynthOptions o;
    o.kind = SynthKind::sine_mixture;
    o.n_tracks = 5;
    o.duration_s = 1.0;
    o.seed = 3;
    synth_corpus(o, corpus);
    // One short track that must be skipped.
    write_wav({sine(3000, 200.0, 16000.0), 16000}, corpus / "zz_short.wav", WavEncoding::float32);
  }
  void TearDown() override {
    set_num_threads(1);
    fs::remove_all(dir);
  }
  fs::path dir, corpus;
};

TEST_F(ArchiveTest, RoundTripMatchesInMemoryPatches) {
  PrepareOptions o;
  o.r = 4;
  o.patch_length = 4096;
  o.stride = 2048;
  o.fractions = {1.0, 0.0, 0.0};
  const auto summary = prepare(corpus, dir / "out", o);
  EXPECT_EQ(summary["train"], 5 * 6);  // floor((16000 - 4096) / 2048) + 1 = 6 per track
  EXPECT_EQ(summary["val"], 0);
  const auto a = load_archive(dir / "out" / "train");
  ASSERT_EQ(a.size(), 30u);
  EXPECT_EQ(a.manifest["count"], 30);
  EXPECT_EQ(a.manifest["sources"].size(), 5u);
  ASSERT_EQ(a.manifest["skipped"].size(), 1u);
  EXPECT_EQ(a.manifest["skipped"][0]["file"], "zz_short.wav");
  std::size_t rec = 0;
  for (const auto& f : list_wavs(corpus)) {
    const auto buf = read_wav(f);
    const auto p = make_track_patches(buf.samples, 4, 4096, 2048, true);
    for (std::size_t i = 0; i < p.size(); ++i, ++rec) {
      ASSERT_TRUE(std::equal(p.input(i).begin(), p.input(i).end(), a.input(rec).begin()));
      ASSERT_TRUE(std::equal(p.target(i).begin(), p.target(i).end(), a.target(rec).begin()));
    }
  }
  EXPECT_EQ(rec, 30u);
  // Fixed header plus fixed-size records.
  EXPECT_EQ(fs::file_size(dir / "out" / "train" / "patches.bin"), 20u + 30u * 2u * 4096u * 4u);
}

TEST_F(ArchiveTest, ByteIdenticalAcrossRunsAndThreadCounts) {
  PrepareOptions o;
  o.fractions = {0.6, 0.2, 0.2};
  o.seed = 5;
  set_num_threads(1);
  prepare(corpus, dir / "a", o);
  set_num_threads(3);
  prepare(corpus, dir / "b", o);
  for (const char* s : {"train", "val", "test"}) {
    EXPECT_EQ(bytes_of(dir / "a" / s / "patches.bin"), bytes_of(dir / "b" / s / "patches.bin")) << s;
    EXPECT_EQ(bytes_of(dir / "a" / s / "manifest.json"), bytes_of(dir / "b" / s / "manifest.json")) << s;
  }
}

TEST_F(ArchiveTest, LpfFlagChangesArchiveBytes) {
  PrepareOptions o;
  o.fractions = {1.0, 0.0, 0.0};
  o.r = 2;
  prepare(corpus, dir / "lpf", o);
  o.use_lpf = false;
  prepare(corpus, dir / "nolpf", o);
  EXPECT_NE(bytes_of(dir / "lpf" / "train" / "patches.bin"), bytes_of(dir / "nolpf" / "train" / "patches.bin"));
}

TEST_F(ArchiveTest, CorruptPayloadDetected) {
  PrepareOptions o;
  o.fractions = {1.0, 0.0, 0.0};
  prepare(corpus, dir / "out", o);
  const auto bin = dir / "out" / "train" / "patches.bin";
  fs::resize_file(bin, fs::file_size(bin) - 4);
  EXPECT_THROW(load_archive(dir / "out" / "train"), ParseError);
  std::ofstream(bin, std::ios::binary | std::ios::trunc) << "NOPE";
  EXPECT_THROW(load_archive(dir / "out" / "train"), ParseError);
  EXPECT_THROW(load_archive(dir / "missing"), IoError);
}
