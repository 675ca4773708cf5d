#pragma once

// Mono RIFF/WAVE reader and writer (PCM16 and IEEE float32).
//
// Normalization is asymmetric on purpose: PCM16 value v reads as v / 32768
// and a sample s writes as round(clamp(s, -1, 1) * 32767). Float32 data is
// stored and loaded verbatim.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "bwex/error.hpp"

namespace bwex {

struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 0;

  std::size_t size() const noexcept { return samples.size(); }
  double duration() const noexcept {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// Throws if the buffer violates the processing invariants
/// (positive rate, non-empty, finite samples).
inline void validate(const AudioBuffer& buf) {
  if (buf.sample_rate <= 0) throw DomainError("audio buffer: sample_rate must be positive");
  if (buf.samples.empty()) throw LengthError("audio buffer: no samples");
  for (double s : buf.samples) {
    if (!std::isfinite(s)) throw DomainError("audio buffer: non-finite sample");
  }
}

enum class WavEncoding { pcm16, float32 };

struct WavReadOptions {
  bool downmix = false;  // average channels instead of rejecting multi-channel files
};

namespace detail {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw ParseError(std::string("truncated ") + what, pos_);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::string tag(const char* what) {
    need(4, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return s;
  }
  void skip(std::size_t n) { pos_ += std::min(n, remaining()); }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
inline void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Converts one PCM16 sample to the normalized range (v / 32768).
constexpr double pcm16_to_real(std::int16_t v) noexcept { return static_cast<double>(v) / 32768.0; }

/// Clamps to [-1, 1] and rounds half away from zero to v * 32767.
inline std::int16_t real_to_pcm16(double s) noexcept {
  const double c = std::clamp(s, -1.0, 1.0);
  return static_cast<std::int16_t>(std::round(c * 32767.0));
}

inline AudioBuffer decode_wav(std::span<const std::uint8_t> bytes, const WavReadOptions& opts = {}) {
  detail::ByteReader rd(bytes);
  if (rd.tag("RIFF header") != "RIFF") throw ParseError("missing RIFF tag", 0);
  rd.u32("RIFF size");
  if (rd.tag("WAVE tag") != "WAVE") throw ParseError("missing WAVE tag", 8);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;

  while (rd.remaining() >= 8) {
    const std::size_t chunk_at = rd.offset();
    const std::string id = rd.tag("chunk id");
    const std::uint32_t size = rd.u32("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw ParseError("fmt chunk too small", chunk_at);
      auto body = rd.take(size, "fmt chunk");
      detail::ByteReader f(body);
      format = f.u16("format tag");
      channels = f.u16("channel count");
      rate = f.u32("sample rate");
      f.u32("byte rate");
      block_align = f.u16("block align");
      bits = f.u16("bits per sample");
      if (format == detail::kFormatExtensible) {
        if (size < 40) throw ParseError("extensible fmt chunk too small", chunk_at);
        f.skip(8);  // cbSize, valid bits, channel mask
        format = f.u16("sub-format");
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw ParseError("data chunk before fmt chunk", chunk_at);
      if (channels == 0) throw ParseError("zero channels", chunk_at);
      if (rate == 0) throw ParseError("zero sample rate", chunk_at);
      const bool pcm16 = format == detail::kFormatPcm && bits == 16;
      const bool f32 = format == detail::kFormatFloat && bits == 32;
      if (!pcm16 && !f32) {
        throw UnsupportedFormatError("unsupported WAV encoding (format " + std::to_string(format) +
                                     ", " + std::to_string(bits) + " bits); need PCM16 or float32");
      }
      const std::size_t width = bits / 8;
      if (block_align != width * channels) throw ParseError("inconsistent block align", chunk_at);
      if (size % block_align != 0) throw ParseError("data size not a multiple of the frame size", chunk_at);
      auto body = rd.take(size, "data chunk");
      if (channels > 1 && !opts.downmix) {
        throw UnsupportedFormatError("WAV has " + std::to_string(channels) +
                                     " channels; only mono is accepted without downmix");
      }
      const std::size_t frames = size / block_align;
      AudioBuffer buf;
      buf.sample_rate = static_cast<int>(rate);
      buf.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const std::uint8_t* p = body.data() + i * block_align + c * width;
          if (pcm16) {
            acc += pcm16_to_real(static_cast<std::int16_t>(p[0] | (p[1] << 8)));
          } else {
            std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                              (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
            acc += static_cast<double>(std::bit_cast<float>(u));
          }
        }
        buf.samples[i] = channels == 1 ? acc : acc / channels;
      }
      return buf;
    } else {
      rd.skip(size + (size & 1u));
    }
  }
  throw ParseError(have_fmt ? "no data chunk" : "no fmt chunk", rd.offset());
}

inline AudioBuffer read_wav(const std::filesystem::path& path, const WavReadOptions& opts = {}) {
  const auto bytes = detail::slurp(path);
  try {
    return decode_wav(bytes, opts);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

inline std::vector<std::uint8_t> encode_wav(const AudioBuffer& buf, WavEncoding enc) {
  if (buf.sample_rate <= 0) throw DomainError("encode_wav: sample_rate must be positive");
  for (double s : buf.samples) {
    if (!std::isfinite(s)) throw DomainError("encode_wav: non-finite sample");
  }
  const std::uint16_t bits = enc == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t format = enc == WavEncoding::pcm16 ? detail::kFormatPcm : detail::kFormatFloat;
  const std::uint32_t width = bits / 8;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(buf.samples.size() * width);
  const std::uint32_t rate = static_cast<std::uint32_t>(buf.sample_rate);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  detail::put_tag(out, "RIFF");
  detail::put_u32(out, 36 + data_bytes);
  detail::put_tag(out, "WAVE");
  detail::put_tag(out, "fmt ");
  detail::put_u32(out, 16);
  detail::put_u16(out, format);
  detail::put_u16(out, 1);
  detail::put_u32(out, rate);
  detail::put_u32(out, rate * width);
  detail::put_u16(out, static_cast<std::uint16_t>(width));
  detail::put_u16(out, bits);
  detail::put_tag(out, "data");
  detail::put_u32(out, data_bytes);
  for (double s : buf.samples) {
    if (enc == WavEncoding::pcm16) {
      detail::put_u16(out, static_cast<std::uint16_t>(real_to_pcm16(s)));
    } else {
      detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(s)));
    }
  }
  return out;
}

inline void write_wav(const AudioBuffer& buf, const std::filesystem::path& path,
                      WavEncoding enc = WavEncoding::float32) {
  const auto bytes = encode_wav(buf, enc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace bwex
