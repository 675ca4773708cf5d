#pragma once

// Binary checkpoint of a ParamStore. Layout (all integers little-endian u32,
// payloads little-endian IEEE float32):
//
//   "BWEX"  version  count  record*count            -- parameters and buffers
//                    count  record*count            -- optimizer state
//   record: name_len  name[name_len] (UTF-8)  rank  dims[rank]  payload[prod(dims)]
//
// Optimizer records are named "<param>/adam_m", "<param>/adam_v" (parameter
// shape) and "<param>/adam_step" (shape [2]: step mod 2^24, step div 2^24).
// See docs/formats.md.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bwex/error.hpp"
#include "bwex/nn/param_store.hpp"

namespace bwex::nn {

inline constexpr char kCheckpointMagic[4] = {'B', 'W', 'E', 'X'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_record(std::vector<std::uint8_t>& out, const CheckpointRecord& r) {
  put_u32(out, static_cast<std::uint32_t>(r.name.size()));
  out.insert(out.end(), r.name.begin(), r.name.end());
  put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
  for (auto d : r.shape) put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : r.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class CheckpointReader {
 public:
  explicit CheckpointReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    if (bytes_.size() - pos_ < 4) throw ParseError(std::string("checkpoint truncated reading ") + what, pos_);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  CheckpointRecord record() {
    CheckpointRecord r;
    const std::uint32_t len = u32("name length");
    if (bytes_.size() - pos_ < len) throw ParseError("checkpoint truncated reading name", pos_);
    r.name.assign(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    const std::uint32_t rank = u32("rank");
    if (rank == 0 || rank > 3) throw ParseError("checkpoint record '" + r.name + "' has rank " + std::to_string(rank), pos_);
    for (std::uint32_t i = 0; i < rank; ++i) r.shape.push_back(u32("dim"));
    const std::size_t count = element_count(r.shape);
    if ((bytes_.size() - pos_) / 4 < count) throw ParseError("checkpoint truncated in payload of '" + r.name + "'", pos_);
    r.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) r.values[i] = std::bit_cast<float>(u32("payload"));
    return r;
  }

  void skip(std::size_t n) { pos_ = std::min(bytes_.size(), pos_ + n); }
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
CheckpointRecord make_record(const std::string& name, const Shape& shape, std::span<const T> values) {
  return {name, shape, std::vector<float>(values.begin(), values.end())};
}

}  // namespace detail

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const ParamStore<T>& store) {
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(store.size()));
  std::uint32_t trainable = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    detail::put_record(out, detail::make_record<T>(p.name, p.value.shape(), p.value.data()));
    if (p.trainable) ++trainable;
  }
  detail::put_u32(out, trainable * 3);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    if (!p.trainable) continue;
    detail::put_record(out, detail::make_record<T>(p.name + "/adam_m", p.value.shape(), std::span<const T>(p.adam_m)));
    detail::put_record(out, detail::make_record<T>(p.name + "/adam_v", p.value.shape(), std::span<const T>(p.adam_v)));
    const float lo = static_cast<float>(p.step & 0xFFFFFFu);
    const float hi = static_cast<float>(p.step >> 24);
    detail::put_record(out, {p.name + "/adam_step", {2}, {lo, hi}});
  }
  return out;
}

/// Loads values and optimizer state into an existing store. Every store entry
/// must be present with a matching shape; unknown records are rejected.
template <typename T>
void decode_checkpoint(ParamStore<T>& store, std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || !std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.begin())) {
    throw ParseError("not a BWEX checkpoint (bad magic)", 0);
  }
  detail::CheckpointReader rd(bytes);
  rd.skip(4);
  const std::uint32_t version = rd.u32("version");
  if (version != kCheckpointVersion) throw UnsupportedFormatError("checkpoint version " + std::to_string(version) + " is not supported");

  std::map<std::string, CheckpointRecord> records;
  for (int section = 0; section < 2; ++section) {
    const std::uint32_t count = rd.u32("record count");
    for (std::uint32_t i = 0; i < count; ++i) {
      auto r = rd.record();
      auto name = r.name;
      if (!records.emplace(name, std::move(r)).second) throw ParseError("duplicate checkpoint record '" + name + "'", rd.offset());
    }
  }
  if (!rd.done()) throw ParseError("trailing bytes after checkpoint", rd.offset());

  auto take = [&](const std::string& name, const Shape& shape) -> CheckpointRecord& {
    auto it = records.find(name);
    if (it == records.end()) throw ConfigError("checkpoint is missing '" + name + "'");
    if (it->second.shape != shape) {
      throw ShapeError("checkpoint record '" + name + "' has shape " + to_string(it->second.shape) + ", model expects " +
                       to_string(shape));
    }
    return it->second;
  };
  std::size_t used = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    auto& r = take(p.name, p.value.shape());
    std::copy(r.values.begin(), r.values.end(), p.value.data().begin());
    ++used;
    if (!p.trainable) continue;
    auto& m = take(p.name + "/adam_m", p.value.shape());
    auto& v = take(p.name + "/adam_v", p.value.shape());
    auto& s = take(p.name + "/adam_step", {2});
    std::copy(m.values.begin(), m.values.end(), p.adam_m.begin());
    std::copy(v.values.begin(), v.values.end(), p.adam_v.begin());
    p.step = static_cast<std::uint64_t>(s.values[0]) + (static_cast<std::uint64_t>(s.values[1]) << 24);
    used += 3;
  }
  if (used != records.size()) throw ConfigError("checkpoint holds records the model does not define");
  store.zero_grad();
}

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

template <typename T>
void load_checkpoint(ParamStore<T>& store, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  decode_checkpoint(store, bytes);
}

}  // namespace bwex::nn
