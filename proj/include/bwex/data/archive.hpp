#pragma once

// Patch archives: manifest.json plus patches.bin (layout in docs/formats.md).
//
// patches.bin, little-endian:
//   "BWXP"  u32 version (1)  u32 patch_length  u64 count
//   count records of { float32 input[patch_length], float32 target[patch_length] }

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bwex/audio/wav.hpp"
#include "bwex/data/corpus.hpp"
#include "bwex/dsp/resample.hpp"
#include "bwex/error.hpp"
#include "bwex/nn/parallel.hpp"

namespace bwex {

static_assert(std::endian::native == std::endian::little, "patch archives assume a little-endian host");

inline constexpr const char* kArchiveSchema = "bwex.patches/1";
inline constexpr std::uint32_t kArchiveVersion = 1;

struct PrepareOptions {
  int r = 4;
  int patch_length = 6000;
  int stride = 0;  // 0 = patch_length / 2
  bool use_lpf = true;
  std::uint64_t seed = 0;
  std::array<double, 3> fractions{0.88, 0.06, 0.06};

  int effective_stride() const { return stride > 0 ? stride : patch_length / 2; }
};

/// In-memory archive; patch i occupies [i * patch_length, (i+1) * patch_length)
/// of `inputs` and `targets`.
struct PatchArchive {
  nlohmann::json manifest;
  int patch_length = 0;
  std::vector<float> inputs, targets;

  std::size_t size() const { return patch_length ? inputs.size() / static_cast<std::size_t>(patch_length) : 0; }
  std::span<const float> input(std::size_t i) const {
    return std::span<const float>(inputs).subspan(i * patch_length, static_cast<std::size_t>(patch_length));
  }
  std::span<const float> target(std::size_t i) const {
    return std::span<const float>(targets).subspan(i * patch_length, static_cast<std::size_t>(patch_length));
  }
};

/// Aligned (input, target) pairs for one track: input = spline_upscale(
/// decimate(target, r), r) truncated to the track length, windowed at `stride`.
inline PatchArchive make_track_patches(std::span<const double> track, int r, int patch_length, int stride, bool use_lpf) {
  if (patch_length <= 0 || stride <= 0) throw DomainError("patch length and stride must be positive");
  PatchArchive a;
  a.patch_length = patch_length;
  if (track.size() < static_cast<std::size_t>(patch_length)) return a;
  const auto low = decimate(track, r, use_lpf);
  const auto up = spline_upscale(low, r);
  const std::size_t n = track.size(), L = static_cast<std::size_t>(patch_length);
  for (std::size_t s = 0; s + L <= n; s += static_cast<std::size_t>(stride)) {
    for (std::size_t i = 0; i < L; ++i) {
      a.inputs.push_back(static_cast<float>(up[s + i]));
      a.targets.push_back(static_cast<float>(track[s + i]));
    }
  }
  return a;
}

namespace detail {

template <typename T>
void write_le(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_le(std::ifstream& f, const std::filesystem::path& p) {
  T v{};
  if (!f.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError("truncated header in '" + p.string() + "'", static_cast<std::size_t>(f.gcount()));
  return v;
}

}  // namespace detail

/// Builds one archive directory from `files`. Tracks shorter than the patch
/// are skipped and listed under "skipped" in the manifest. Tracks are
/// processed in parallel chunks; records are written in the given order.
inline nlohmann::json write_archive(const std::vector<std::filesystem::path>& files, const std::filesystem::path& base_dir,
                                    const std::filesystem::path& out_dir, const std::string& split, const PrepareOptions& o) {
  const int stride = o.effective_stride();
  if (o.patch_length <= 0) throw ConfigError("patch length must be positive");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  const auto bin_path = out_dir / "patches.bin";
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot open '" + bin_path.string() + "' for writing");
  bin.write("BWXP", 4);
  detail::write_le<std::uint32_t>(bin, kArchiveVersion);
  detail::write_le<std::uint32_t>(bin, static_cast<std::uint32_t>(o.patch_length));
  detail::write_le<std::uint64_t>(bin, 0);  // patched below

  nlohmann::json sources = nlohmann::json::array(), skipped = nlohmann::json::array();
  std::uint64_t count = 0;
  int sample_rate = 0;
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, num_threads()));
  for (std::size_t start = 0; start < files.size(); start += chunk) {
    const std::size_t end = std::min(files.size(), start + chunk);
    std::vector<PatchArchive> parts(end - start);
    std::vector<AudioBuffer> bufs(end - start);
    parallel_for(end - start, [&](std::size_t k) {
      bufs[k] = read_wav(files[start + k], {.downmix = true});
      parts[k] = make_track_patches(bufs[k].samples, o.r, o.patch_length, stride, o.use_lpf);
    });
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto name = std::filesystem::relative(files[start + k], base_dir).generic_string();
      if (sample_rate == 0) sample_rate = bufs[k].sample_rate;
      if (parts[k].size() == 0) {
        skipped.push_back({{"file", name},
                           {"reason", "shorter than patch_length (" + std::to_string(bufs[k].size()) + " < " +
                                          std::to_string(o.patch_length) + " samples)"}});
        continue;
      }
      for (std::size_t i = 0; i < parts[k].size(); ++i) {
        bin.write(reinterpret_cast<const char*>(parts[k].input(i).data()), o.patch_length * sizeof(float));
        bin.write(reinterpret_cast<const char*>(parts[k].target(i).data()), o.patch_length * sizeof(float));
      }
      count += parts[k].size();
      sources.push_back({{"file", name}, {"patches", parts[k].size()}});
    }
  }
  bin.seekp(12);
  detail::write_le<std::uint64_t>(bin, count);
  bin.close();
  if (!bin) throw IoError("write failed for '" + bin_path.string() + "'");

  nlohmann::json m{{"schema", kArchiveSchema},
                   {"split", split},
                   {"corpus_dir", base_dir.generic_string()},
                   {"r", o.r},
                   {"patch_length", o.patch_length},
                   {"stride", stride},
                   {"use_lpf", o.use_lpf},
                   {"seed", o.seed},
                   {"sample_rate", sample_rate},
                   {"count", count},
                   {"sources", sources},
                   {"skipped", skipped}};
  std::ofstream mf(out_dir / "manifest.json", std::ios::trunc);
  mf << m.dump(2) << '\n';
  if (!mf) throw IoError("cannot write manifest in '" + out_dir.string() + "'");
  return m;
}

/// Splits `corpus_dir` and writes out_dir/{train,val,test}. Empty splits
/// still get an (empty) archive so downstream paths always exist.
inline nlohmann::json prepare(const std::filesystem::path& corpus_dir, const std::filesystem::path& out_dir, const PrepareOptions& o) {
  if (o.r < 2) throw ConfigError("prepare: r must be >= 2");
  const auto split = split_corpus(list_wavs(corpus_dir), o.fractions, o.seed);
  nlohmann::json summary;
  summary["train"] = write_archive(split.train, corpus_dir, out_dir / "train", "train", o)["count"];
  summary["val"] = write_archive(split.val, corpus_dir, out_dir / "val", "val", o)["count"];
  summary["test"] = write_archive(split.test, corpus_dir, out_dir / "test", "test", o)["count"];
  return summary;
}

/// Loads an archive directory; verifies the manifest against the payload.
inline PatchArchive load_archive(const std::filesystem::path& dir) {
  PatchArchive a;
  const auto mpath = dir / "manifest.json";
  std::ifstream mf(mpath);
  if (!mf) throw IoError("cannot open '" + mpath.string() + "'");
  try {
    a.manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("bad manifest '" + mpath.string() + "': " + e.what(), e.byte);
  }
  if (a.manifest.value("schema", "") != kArchiveSchema) throw UnsupportedFormatError("unsupported archive schema in '" + mpath.string() + "'");

  const auto bpath = dir / "patches.bin";
  std::ifstream bin(bpath, std::ios::binary);
  if (!bin) throw IoError("cannot open '" + bpath.string() + "'");
  char magic[4];
  if (!bin.read(magic, 4) || std::memcmp(magic, "BWXP", 4) != 0) throw ParseError("bad magic in '" + bpath.string() + "'", 0);
  if (detail::read_le<std::uint32_t>(bin, bpath) != kArchiveVersion) throw UnsupportedFormatError("unsupported archive version in '" + bpath.string() + "'");
  a.patch_length = static_cast<int>(detail::read_le<std::uint32_t>(bin, bpath));
  const auto count = detail::read_le<std::uint64_t>(bin, bpath);
  if (count != a.manifest.value("count", std::uint64_t{0}) || a.patch_length != a.manifest.value("patch_length", 0)) {
    throw ParseError("manifest does not match payload header in '" + dir.string() + "'", 8);
  }
  const std::size_t per = static_cast<std::size_t>(a.patch_length);
  a.inputs.resize(count * per);
  a.targets.resize(count * per);
  for (std::size_t i = 0; i < count; ++i) {
    if (!bin.read(reinterpret_cast<char*>(a.inputs.data() + i * per), per * sizeof(float)) ||
        !bin.read(reinterpret_cast<char*>(a.targets.data() + i * per), per * sizeof(float))) {
      throw ParseError("truncated payload in '" + bpath.string() + "' at record " + std::to_string(i),
                       20 + i * per * 2 * sizeof(float));
    }
  }
  if (bin.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes in '" + bpath.string() + "'", 20 + count * per * 2 * sizeof(float));
  return a;
}

}  // namespace bwex
