#pragma once

// The `bwex` command line: synth, prepare, train, upscale, eval,
// spectrogram, gradcheck. Exit codes: 0 success, 1 usage, 2 runtime failure.
//
// --config FILE reads a JSON object {"schema": "bwex.config/1", ...}. Keys are
// long flag names without dashes; top-level keys set global flags and
// per-subcommand objects ("train": {"epochs": 30}) set that subcommand's
// flags. Flags given on the command line win over the file.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bwex/audio/wav.hpp"
#include "bwex/baseline/spectral_dnn.hpp"
#include "bwex/data/archive.hpp"
#include "bwex/data/corpus.hpp"
#include "bwex/data/synth.hpp"
#include "bwex/dsp/resample.hpp"
#include "bwex/error.hpp"
#include "bwex/eval/report.hpp"
#include "bwex/eval/spectrogram.hpp"
#include "bwex/model/audit.hpp"
#include "bwex/model/predict.hpp"
#include "bwex/nn/parallel.hpp"
#include "bwex/train/trainer.hpp"

namespace bwex {

inline constexpr const char* kConfigSchema = "bwex.config/1";

/// JSON front end for CLI11's config machinery.
class JsonCliConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    throw CLI::ConfigError("writing config files is not supported");
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw CLI::ConfigError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config: top level must be an object");
    if (j.value("schema", "") != kConfigSchema) throw CLI::ConfigError(std::string("config: schema must be \"") + kConfigSchema + "\"");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number() || v.is_null()) return v.dump();
    throw CLI::ConfigError("config: nested arrays/objects are not allowed here");
  }

  static void flatten(const nlohmann::json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, v] : obj.items()) {
      if (parents.empty() && key == "schema") continue;
      if (v.is_object()) {
        auto p = parents;
        p.push_back(key);
        flatten(v, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (v.is_array()) {
        for (const auto& e : v) item.inputs.push_back(scalar(e));
      } else {
        item.inputs.push_back(scalar(v));
      }
      out.push_back(std::move(item));
    }
  }
};

namespace cli_detail {

struct Globals {
  int threads = 0;  // 0 = BWEX_THREADS or 1
  std::uint64_t seed = 0;
};

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + p.string() + "' for writing");
  return f;
}

inline void require_ratio(int r) {
  if (r < 2) throw UsageError("--r must be >= 2");
}

/// Test tracks from a prepared split directory (manifest.json) or a plain
/// directory of WAV files.
inline std::vector<std::filesystem::path> resolve_tracks(const std::filesystem::path& p) {
  if (std::filesystem::exists(p / "manifest.json")) return archive_tracks(p);
  if (!std::filesystem::is_directory(p)) throw IoError("'" + p.string() + "' is not a directory");
  return list_wavs(p);
}

inline std::optional<int> checkpoint_ratio(const std::filesystem::path& ckpt) {
  const auto side = read_json_file(sidecar_path(ckpt));
  const auto extra = side.value("extra", nlohmann::json::object());
  if (extra.contains("data") && extra["data"].contains("r")) return extra["data"]["r"].get<int>();
  return std::nullopt;
}

}  // namespace cli_detail

/// Runs one command. `argv[0]` is ignored.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  CLI::App app{"Neural audio bandwidth extension: data, training, upscaling and evaluation.", "bwex"};
  app.config_formatter(std::make_shared<JsonCliConfig>());
  app.set_config("--config", "", "JSON config file (schema bwex.config/1); flags override it");
  app.allow_config_extras(false);
  app.require_subcommand(1);
  app.fallthrough();

  cli_detail::Globals g;
  app.add_option("--threads", g.threads, "Worker threads (default: BWEX_THREADS, else 1)")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();

  // synth
  SynthOptions so;
  std::string synth_kind = "voiced";
  fs::path synth_out;
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic corpus of WAV files");
  synth->add_option("out", synth_out, "Output directory")->required();
  synth->add_option("--tracks", so.n_tracks, "Number of tracks")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--duration", so.duration_s, "Track length in seconds")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--rate", so.sample_rate, "Sample rate in Hz")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--kind", synth_kind, "sine-mixture | chirp | noise-band | voiced")->capture_default_str();
  synth->add_option("--band-limit", so.band_limit_hz, "Upper frequency for sine-mixture/noise-band in Hz (0 = 0.45 * rate)")
      ->capture_default_str();

  // prepare
  PrepareOptions po;
  bool prep_no_lpf = false;
  std::vector<double> prep_split{0.88, 0.06, 0.06};
  fs::path prep_in, prep_out;
  auto* prepare_cmd = app.add_subcommand("prepare", "Split a corpus and cut aligned (low-res, high-res) patch archives");
  prepare_cmd->add_option("corpus", prep_in, "Directory of WAV files")->required();
  prepare_cmd->add_option("out", prep_out, "Output directory (train/, val/, test/)")->required();
  prepare_cmd->add_option("--r", po.r, "Upscaling ratio")->capture_default_str();
  prepare_cmd->add_option("--patch-len", po.patch_length, "Patch length in high-rate samples")->capture_default_str();
  prepare_cmd->add_option("--stride", po.stride, "Patch stride (0 = patch-len / 2)")->capture_default_str();
  prepare_cmd->add_flag("--no-lpf", prep_no_lpf, "Decimate without the anti-alias filter");
  prepare_cmd->add_option("--split", prep_split, "Train,val,test fractions")->delimiter(',')->expected(3)->capture_default_str();

  // train
  TrainOptions to;
  to.epochs = 400;
  std::string train_model = "audiounet";
  int blocks = 4;
  std::size_t width_divisor = 1;
  bool ablate = false, resume = false;
  std::vector<std::string> variants{"full", "no_residual", "no_skip"};
  int ablate_seeds = 3;
  std::vector<std::size_t> dnn_hidden{2048, 2048, 2048};
  fs::path train_data, train_out;
  auto* train_cmd = app.add_subcommand("train", "Train a model on prepared archives");
  train_cmd->add_option("data", train_data, "Prepared directory holding train/ and val/")->required();
  train_cmd->add_option("--out", train_out, "Output directory for checkpoints and history")->required();
  train_cmd->add_option("--model", train_model, "audiounet | dnn")->capture_default_str();
  train_cmd->add_option("--epochs", to.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--batch", to.batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", to.lr, "ADAM learning rate")->capture_default_str();
  train_cmd->add_option("--clip-norm", to.clip_norm, "Max gradient norm (0 = off)")->capture_default_str();
  train_cmd->add_option("--blocks", blocks, "Down/up blocks B (audiounet)")->capture_default_str();
  train_cmd->add_option("--width-divisor", width_divisor, "Divide every filter count by this (audiounet)")->capture_default_str();
  train_cmd->add_option("--dnn-hidden", dnn_hidden, "Hidden layer widths (dnn)")->delimiter(',')->capture_default_str();
  train_cmd->add_flag("--resume", resume, "Continue from <out>/last.ckpt (audiounet)");
  train_cmd->add_flag("--ablate", ablate, "Run every variant over consecutive seeds from --seed");
  train_cmd->add_option("--variants", variants, "Ablation variants")->delimiter(',')->capture_default_str();
  train_cmd->add_option("--ablate-seeds", ablate_seeds, "Seeds per variant with --ablate")->capture_default_str()->check(CLI::PositiveNumber);

  // upscale
  fs::path up_ckpt, up_in, up_out;
  int up_r = 4;
  auto* upscale_cmd = app.add_subcommand("upscale", "Upscale a low-rate WAV by r (spline, then the model if --ckpt is given)");
  upscale_cmd->add_option("in", up_in, "Input WAV")->required();
  upscale_cmd->add_option("out", up_out, "Output WAV at r times the input rate")->required();
  upscale_cmd->add_option("--ckpt", up_ckpt, "Checkpoint (audiounet or dnn); omit for spline only");
  upscale_cmd->add_option("--r", up_r, "Upscaling ratio")->capture_default_str();

  // eval
  EvalOptions eo;
  bool eval_no_lpf = false, published_refs = false, lpf_grid = false;
  std::string ref_task = "MultiSpeaker";
  fs::path eval_tracks, eval_csv, ckpt_nolpf;
  auto* eval_cmd = app.add_subcommand("eval", "SNR / LSD report over test tracks");
  eval_cmd->add_option("tracks", eval_tracks, "Prepared split directory (e.g. out/test) or directory of WAVs")->required();
  eval_cmd->add_option("--methods", eo.methods, "Methods to evaluate")->delimiter(',')->capture_default_str();
  eval_cmd->add_option("--r", eo.r, "Upscaling ratio")->capture_default_str();
  eval_cmd->add_option("--task", eo.task, "Task label for the report")->capture_default_str();
  eval_cmd->add_option("--model-ckpt", eo.model_ckpt, "audiounet checkpoint");
  eval_cmd->add_option("--dnn-ckpt", eo.dnn_ckpt, "dnn checkpoint");
  eval_cmd->add_flag("--no-lpf", eval_no_lpf, "Build test inputs without the anti-alias filter");
  eval_cmd->add_flag("--published-refs", published_refs, "Print published reference values next to the results");
  eval_cmd->add_option("--ref-task", ref_task, "Reference column: SingleSpeaker | MultiSpeaker | Piano")->capture_default_str();
  eval_cmd->add_flag("--lpf-grid", lpf_grid, "Also report the train-filter x test-filter grid for the model");
  eval_cmd->add_option("--model-ckpt-nolpf", ckpt_nolpf, "audiounet checkpoint trained without the filter (for --lpf-grid)");
  eval_cmd->add_option("--csv", eval_csv, "Also write the report as CSV");

  // spectrogram
  fs::path spec_in, spec_out;
  SpectrogramOptions spo;
  auto* spec_cmd = app.add_subcommand("spectrogram", "Write a log-power spectrogram as PGM plus CSV");
  spec_cmd->add_option("in", spec_in, "Input WAV")->required();
  spec_cmd->add_option("out", spec_out, "Output .pgm (the .csv is written next to it)")->required();
  spec_cmd->add_option("--frame", spo.frame_length, "Frame length")->capture_default_str()->check(CLI::PositiveNumber);
  spec_cmd->add_option("--hop", spo.hop, "Hop length")->capture_default_str()->check(CLI::PositiveNumber);

  // gradcheck
  AuditOptions ao;
  double tol = 1e-4;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference audit of every layer and a small composed model");
  grad_cmd->add_option("--cases", ao.cases, "Random cases per layer")->capture_default_str()->check(CLI::PositiveNumber);
  grad_cmd->add_option("--tol", tol, "Maximum relative error")->capture_default_str();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    if (const std::string ini = "INI was not able to parse "; msg.rfind(ini, 0) == 0) msg = "unknown config key " + msg.substr(ini.size());
    err << "error: " << msg << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 1;
  }

  try {
    set_num_threads(g.threads > 0 ? g.threads : threads_from_env(1));

    if (synth->parsed()) {
      so.kind = parse_synth_kind(synth_kind);
      so.seed = g.seed;
      const auto files = synth_corpus(so, synth_out);
      out << "wrote " << files.size() << " tracks to " << synth_out.string() << '\n';
    } else if (prepare_cmd->parsed()) {
      cli_detail::require_ratio(po.r);
      po.use_lpf = !prep_no_lpf;
      po.seed = g.seed;
      po.fractions = {prep_split[0], prep_split[1], prep_split[2]};
      const auto counts = prepare(prep_in, prep_out, po);
      out << "patches: " << counts.dump() << '\n';
    } else if (train_cmd->parsed()) {
      const auto tr = load_archive(train_data / "train");
      const auto va = fs::exists(train_data / "val" / "manifest.json") ? load_archive(train_data / "val") : PatchArchive{};
      to.seed = g.seed;
      to.out_dir = train_out;
      to.resume = resume;
      to.on_epoch = [&](const EpochStats& s) {
        char line[160];
        std::snprintf(line, sizeof line, "epoch %d/%d train_mse=%.6e val_mse=%.6e (%.1fs)", s.epoch, to.epochs, s.train_mse, s.val_mse,
                      s.wall_seconds);
        out << line << std::endl;
      };
      if (train_model == "dnn") {
        if (ablate || resume) throw UsageError("--ablate and --resume apply to the audiounet model only");
        SpectralDNNConfig dc;
        dc.r = tr.manifest.at("r").get<int>();
        dc.hidden = dnn_hidden;
        SpectralDNN<float> net(dc, g.seed);
        const auto ds = dnn_dataset_from_archive(tr, dc);
        net.fit_normalization(ds);
        const auto losses = train_dnn(net, ds, {.epochs = to.epochs, .batch = to.batch, .lr = to.lr, .seed = g.seed});
        fs::create_directories(train_out);
        save_dnn(net, train_out / "dnn.ckpt",
                 {{"data", {{"r", dc.r}, {"use_lpf", tr.manifest.value("use_lpf", true)}}}, {"steps", losses.size()}});
        out << "trained dnn for " << losses.size() << " steps; final loss " << (losses.empty() ? 0.0 : losses.back()) << '\n';
      } else if (train_model == "audiounet") {
        auto cfg = ModelConfig::standard(blocks).with_width_divisor(width_divisor);
        cfg.patch_length = static_cast<std::size_t>(tr.patch_length);
        if (ablate) {
          AblationOptions abo;
          abo.variants.clear();
          for (const auto& v : variants) abo.variants.push_back(parse_ablation(v));
          abo.seeds.clear();
          for (int k = 0; k < ablate_seeds; ++k) abo.seeds.push_back(g.seed + static_cast<std::uint64_t>(k));
          abo.train = to;
          const auto runs = ablation_suite(cfg, tr, va, abo);
          for (auto v : abo.variants) out << "median final val_mse " << to_string(v) << ": " << median_final_val(runs, v) << '\n';
        } else {
          AudioUNet<float> net(cfg, g.seed);
          const auto res = train(net, tr, va, to);
          out << "best epoch " << res.best_epoch << " (" << res.best_val << ")\n";
        }
      } else {
        throw UsageError("--model must be audiounet or dnn");
      }
    } else if (upscale_cmd->parsed()) {
      cli_detail::require_ratio(up_r);
      const auto low = read_wav(up_in, {.downmix = true});
      AudioBuffer result;
      if (up_ckpt.empty()) {
        result = spline_upscale(low, up_r);
      } else {
        if (const auto cr = cli_detail::checkpoint_ratio(up_ckpt); cr && *cr != up_r) {
          throw ConfigError("checkpoint was trained for r = " + std::to_string(*cr) + ", not " + std::to_string(up_r));
        }
        if (checkpoint_model_type(up_ckpt) == "dnn") {
          auto net = load_dnn<float>(up_ckpt);
          const auto up = spline_upscale(low, up_r);
          result = {net.enhance(up.samples), up.sample_rate};
        } else {
          auto net = load_model<float>(up_ckpt);
          result = predict_track(net, low, up_r);
        }
      }
      write_wav(result, up_out);
      out << "wrote " << up_out.string() << " (" << result.sample_rate << " Hz, " << result.size() << " samples)\n";
    } else if (eval_cmd->parsed()) {
      cli_detail::require_ratio(eo.r);
      eo.use_lpf_test = !eval_no_lpf;
      const auto tracks = cli_detail::resolve_tracks(eval_tracks);
      const auto rep = evaluate(tracks, eo);
      out << render_text(rep, published_refs, ref_task);
      if (!eval_csv.empty()) {
        auto f = cli_detail::open_out(eval_csv);
        f << render_csv(rep);
      }
      if (lpf_grid) {
        if (eo.model_ckpt.empty() || ckpt_nolpf.empty()) throw UsageError("--lpf-grid needs --model-ckpt and --model-ckpt-nolpf");
        out << '\n' << render_lpf_grid(evaluate_lpf_grid(tracks, eo.r, eo.model_ckpt, ckpt_nolpf, eo.task), published_refs);
      }
      if (published_refs) out << '\n' << render_reference_table();
    } else if (spec_cmd->parsed()) {
      const auto buf = read_wav(spec_in, {.downmix = true});
      const auto lp = spectrogram_dump(buf, spec_out, spo);
      out << "wrote " << spec_out.string() << " (" << lp.rows << " frames x " << lp.cols << " bins)\n";
    } else if (grad_cmd->parsed()) {
      ao.seed = g.seed;
      const auto results = run_gradient_audit(ao);
      char line[160];
      for (const auto& r : results) {
        std::snprintf(line, sizeof line, "%-22s cases=%3zu checked=%6zu max_rel_err=%.3e %s", r.layer.c_str(), r.cases, r.checked,
                      r.max_rel_error, r.passed(tol) ? "PASS" : "FAIL");
        out << line << '\n';
      }
      const bool ok = audit_passed(results, tol);
      out << (ok ? "all layers pass" : "gradient audit FAILED") << '\n';
      return ok ? 0 : 2;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace bwex
