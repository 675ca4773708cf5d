#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "bwex/audio/wav.hpp"
#include "bwex/dsp/resample.hpp"
#include "bwex/model/audio_unet.hpp"
#include "bwex/nn/checkpoint.hpp"

namespace bwex {

inline constexpr const char* kSidecarSchema = "bwex.model/1";

/// Sidecar path for a checkpoint: "<ckpt>.json".
inline std::filesystem::path sidecar_path(const std::filesystem::path& ckpt) {
  return std::filesystem::path(ckpt.string() + ".json");
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

/// Writes the checkpoint plus a JSON sidecar holding the model type, the
/// exact configuration and any caller-supplied metadata under "extra".
template <typename T>
void save_model(const AudioUNet<T>& net, const std::filesystem::path& ckpt, const nlohmann::json& extra = nlohmann::json::object()) {
  nn::save_checkpoint(net.params(), ckpt);
  nlohmann::json side{{"schema", kSidecarSchema}, {"model_type", "audiounet"}, {"config", net.config()}, {"extra", extra}};
  write_json_file(sidecar_path(ckpt), side);
}

inline ModelConfig read_model_config(const std::filesystem::path& ckpt) {
  const auto side = read_json_file(sidecar_path(ckpt));
  if (side.value("schema", "") != kSidecarSchema) throw UnsupportedFormatError("sidecar schema mismatch in " + sidecar_path(ckpt).string());
  if (side.value("model_type", "") != "audiounet") throw ConfigError(ckpt.string() + " is not an audiounet checkpoint");
  return side.at("config").get<ModelConfig>();
}

template <typename T>
AudioUNet<T> load_model(const std::filesystem::path& ckpt) {
  AudioUNet<T> net(read_model_config(ckpt), 0);
  nn::load_checkpoint(net.params(), ckpt);
  return net;
}

/// Runs the network over a whole signal already on the high-rate grid: zero
/// pads to a multiple of 2^B, forwards in inference mode, trims the padding.
template <typename T>
std::vector<double> enhance_signal(AudioUNet<T>& net, std::span<const double> upscaled) {
  const std::size_t mult = net.config().length_multiple();
  const std::size_t padded = (upscaled.size() + mult - 1) / mult * mult;
  nn::Tensor<T> x({1, 1, padded});
  for (std::size_t i = 0; i < upscaled.size(); ++i) x[i] = static_cast<T>(upscaled[i]);
  const auto y = net.forward(x, nn::Mode::infer);
  return std::vector<double>(y.data().begin(), y.data().begin() + static_cast<std::ptrdiff_t>(upscaled.size()));
}

/// Spline-upscales a low-rate track by r, then applies the network.
template <typename T>
AudioBuffer predict_track(AudioUNet<T>& net, const AudioBuffer& low_res, int r) {
  const auto up = spline_upscale(low_res, r);
  return {enhance_signal(net, up.samples), up.sample_rate};
}

}  // namespace bwex
