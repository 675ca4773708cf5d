#pragma once

// Multi-method evaluation over test tracks and Table-style reports.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bwex/audio/wav.hpp"
#include "bwex/baseline/spectral_dnn.hpp"
#include "bwex/dsp/resample.hpp"
#include "bwex/eval/metrics.hpp"
#include "bwex/model/predict.hpp"

namespace bwex {

// ---- published reference values -----------------------------------------

struct ReferenceCell {
  std::string task;
  int r;
  std::string method;  // spline | dnn | model
  std::optional<double> snr, lsd;  // empty = n/a
};

/// Reference accuracy table (SNR dB / LSD) for the three published tasks.
inline const std::vector<ReferenceCell>& reference_table() {
  static const std::vector<ReferenceCell> t = [] {
    std::vector<ReferenceCell> v;
    auto add = [&](const char* task, int r, const char* m, std::optional<double> s, std::optional<double> l) {
      v.push_back({task, r, m, s, l});
    };
    const std::optional<double> na;
    add("SingleSpeaker", 2, "spline", 20.3, 4.5), add("SingleSpeaker", 2, "dnn", 20.1, 3.7), add("SingleSpeaker", 2, "model", 21.1, 3.2);
    add("SingleSpeaker", 4, "spline", 14.8, 8.2), add("SingleSpeaker", 4, "dnn", 15.9, 4.9), add("SingleSpeaker", 4, "model", 17.1, 3.6);
    add("SingleSpeaker", 6, "spline", 10.4, 10.3), add("SingleSpeaker", 6, "dnn", na, na), add("SingleSpeaker", 6, "model", 14.4, 3.4);
    add("MultiSpeaker", 2, "spline", 19.7, 4.4), add("MultiSpeaker", 2, "dnn", 19.9, 3.6), add("MultiSpeaker", 2, "model", 20.7, 3.1);
    add("MultiSpeaker", 4, "spline", 13.0, 8.0), add("MultiSpeaker", 4, "dnn", 14.9, 5.8), add("MultiSpeaker", 4, "model", 16.1, 3.5);
    add("MultiSpeaker", 6, "spline", 9.1, 10.1), add("MultiSpeaker", 6, "dnn", na, na), add("MultiSpeaker", 6, "model", 10.0, 3.7);
    add("Piano", 2, "spline", 29.4, 3.5), add("Piano", 2, "dnn", 29.3, 3.4), add("Piano", 2, "model", 30.1, 3.4);
    add("Piano", 4, "spline", 22.2, 5.8), add("Piano", 4, "dnn", 23.0, 5.2), add("Piano", 4, "model", 23.5, 3.6);
    add("Piano", 6, "spline", 15.4, 7.3), add("Piano", 6, "dnn", na, na), add("Piano", 6, "model", 16.1, 4.4);
    return v;
  }();
  return t;
}

inline std::optional<ReferenceCell> reference_value(const std::string& task, int r, const std::string& method) {
  for (const auto& c : reference_table()) {
    if (c.task == task && c.r == r && c.method == method) return c;
  }
  return std::nullopt;
}

struct LpfReferenceCell {
  bool train_lpf, test_lpf;
  double snr, lsd;
};

/// Piano, r = 2: model trained with/without the anti-alias filter, tested
/// with/without it.
inline const std::vector<LpfReferenceCell>& lpf_reference_grid() {
  static const std::vector<LpfReferenceCell> g{
      {true, true, 30.1, 3.4}, {true, false, 0.42, 4.5}, {false, true, 0.43, 4.4}, {false, false, 33.2, 3.3}};
  return g;
}

// ---- evaluation ----------------------------------------------------------

struct TrackResult {
  std::string track;
  std::string method;
  double snr = 0.0, lsd = 0.0;
};

struct ReportRow {
  std::string task;
  int r = 0;
  std::string method;
  std::string status = "ok";  // ok | n/a | error: ...
  double snr = std::numeric_limits<double>::quiet_NaN();
  double lsd = std::numeric_limits<double>::quiet_NaN();
  std::size_t tracks = 0;
  std::size_t infinite_snr = 0;  // tracks left out of the SNR mean
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<TrackResult> detail;  // sorted by track, then method order

  const ReportRow* find(const std::string& method) const {
    for (const auto& r : rows) {
      if (r.method == method) return &r;
    }
    return nullptr;
  }
};

struct EvalOptions {
  std::string task = "desk";
  int r = 4;
  bool use_lpf_test = true;
  std::vector<std::string> methods{"spline", "dnn", "model"};
  std::filesystem::path model_ckpt;
  std::filesystem::path dnn_ckpt;
};

/// Spline-upscaled low-resolution version of `x` on the original grid.
inline std::vector<double> degrade_and_spline(std::span<const double> x, int r, bool use_lpf) {
  auto up = spline_upscale(decimate(x, r, use_lpf), r);
  up.resize(x.size());
  return up;
}

/// Reads the track list of a prepared split: every source and skipped file
/// of its manifest, resolved against the recorded corpus directory.
inline std::vector<std::filesystem::path> archive_tracks(const std::filesystem::path& split_dir) {
  const auto m = read_json_file(split_dir / "manifest.json");
  const std::filesystem::path base = m.at("corpus_dir").get<std::string>();
  std::vector<std::filesystem::path> out;
  for (const auto& s : m.at("sources")) out.push_back(base / s.at("file").get<std::string>());
  for (const auto& s : m.at("skipped")) out.push_back(base / s.at("file").get<std::string>());
  std::sort(out.begin(), out.end());
  return out;
}

/// Runs every requested method over every track (sorted by path) and
/// averages. A method that cannot run yields one error / n/a row and the
/// rest of the evaluation continues.
inline EvalReport evaluate(std::vector<std::filesystem::path> tracks, const EvalOptions& o) {
  if (tracks.empty()) throw ConfigError("evaluate: no test tracks");
  std::sort(tracks.begin(), tracks.end());
  EvalReport rep;

  using Enhancer = std::function<std::vector<double>(std::span<const double>)>;
  std::vector<std::pair<std::string, Enhancer>> runners;
  std::optional<AudioUNet<float>> unet;
  std::optional<SpectralDNN<float>> dnn;
  for (const auto& m : o.methods) {
    ReportRow row{o.task, o.r, m};
    try {
      if (m == "spline") {
        runners.emplace_back(m, [](std::span<const double> up) { return std::vector<double>(up.begin(), up.end()); });
      } else if (m == "model") {
        if (o.model_ckpt.empty()) throw ConfigError("no model checkpoint given");
        unet.emplace(load_model<float>(o.model_ckpt));
        const auto extra = read_json_file(sidecar_path(o.model_ckpt)).value("extra", nlohmann::json::object());
        if (extra.contains("data") && extra["data"].value("r", o.r) != o.r) {
          throw ConfigError("model checkpoint was trained for r = " + std::to_string(extra["data"].value("r", 0)));
        }
        runners.emplace_back(m, [&](std::span<const double> up) { return enhance_signal(*unet, up); });
      } else if (m == "dnn") {
        if (o.r == 6) {
          row.status = "n/a";
          rep.rows.push_back(row);
          continue;
        }
        if (o.dnn_ckpt.empty()) throw ConfigError("no dnn checkpoint given");
        dnn.emplace(load_dnn<float>(o.dnn_ckpt));
        if (dnn->config().r != o.r) throw ConfigError("dnn checkpoint was trained for r = " + std::to_string(dnn->config().r));
        runners.emplace_back(m, [&](std::span<const double> up) { return dnn->enhance(up); });
      } else {
        throw ConfigError("unknown method '" + m + "'");
      }
      rep.rows.push_back(row);
    } catch (const std::exception& e) {
      row.status = std::string("error: ") + e.what();
      rep.rows.push_back(row);
    }
  }

  std::map<std::string, std::pair<double, double>> sums;
  std::map<std::string, std::size_t> finite;
  for (const auto& path : tracks) {
    const auto x = read_wav(path, {.downmix = true});
    const auto up = degrade_and_spline(x.samples, o.r, o.use_lpf_test);
    for (auto& [name, fn] : runners) {
      const auto y = fn(up);
      TrackResult tr{path.filename().string(), name, snr(y, x.samples), lsd(y, x.samples)};
      if (std::isfinite(tr.snr)) {
        sums[name].first += tr.snr;
        ++finite[name];
      }
      sums[name].second += tr.lsd;
      rep.detail.push_back(tr);
    }
  }
  for (auto& row : rep.rows) {
    if (row.status != "ok") continue;
    row.tracks = tracks.size();
    row.infinite_snr = tracks.size() - finite[row.method];
    row.snr = finite[row.method] ? sums[row.method].first / static_cast<double>(finite[row.method]) : std::numeric_limits<double>::infinity();
    row.lsd = sums[row.method].second / static_cast<double>(tracks.size());
  }
  return rep;
}

struct LpfGridCell {
  bool train_lpf, test_lpf;
  double snr, lsd;
};

/// Model accuracy for each (train filter, test filter) combination.
inline std::vector<LpfGridCell> evaluate_lpf_grid(const std::vector<std::filesystem::path>& tracks, int r,
                                                  const std::filesystem::path& ckpt_lpf, const std::filesystem::path& ckpt_nolpf,
                                                  const std::string& task = "desk") {
  std::vector<LpfGridCell> cells;
  for (bool train_lpf : {true, false}) {
    for (bool test_lpf : {true, false}) {
      EvalOptions o;
      o.task = task;
      o.r = r;
      o.use_lpf_test = test_lpf;
      o.methods = {"model"};
      o.model_ckpt = train_lpf ? ckpt_lpf : ckpt_nolpf;
      const auto rep = evaluate(tracks, o);
      const auto* row = rep.find("model");
      if (row->status != "ok") throw ConfigError("lpf grid: " + row->status);
      cells.push_back({train_lpf, test_lpf, row->snr, row->lsd});
    }
  }
  return cells;
}

// ---- rendering -----------------------------------------------------------

inline std::string render_text(const EvalReport& rep, bool with_refs, const std::string& ref_task = "MultiSpeaker") {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %3s %-8s %10s %8s %7s", "task", "r", "method", "SNR(dB)", "LSD", "tracks");
  os << line;
  if (with_refs) {
    std::snprintf(line, sizeof line, "   | ref %-13s %8s %6s", ref_task.c_str(), "SNR", "LSD");
    os << line;
  }
  os << '\n';
  bool footnote = false;
  for (const auto& r : rep.rows) {
    std::string snr_s = r.status == "ok" ? format_metric(r.snr) : (r.status == "n/a" ? "n/a" : "error");
    std::string lsd_s = r.status == "ok" ? format_metric(r.lsd) : (r.status == "n/a" ? "n/a" : "error");
    if (r.infinite_snr) {
      snr_s += "*";
      footnote = true;
    }
    std::snprintf(line, sizeof line, "%-14s %3d %-8s %10s %8s %7zu", r.task.c_str(), r.r, r.method.c_str(), snr_s.c_str(), lsd_s.c_str(), r.tracks);
    os << line;
    if (with_refs) {
      const auto ref = reference_value(ref_task, r.r, r.method);
      const std::string rs = ref && ref->snr ? format_metric(*ref->snr, 1) : "n/a";
      const std::string rl = ref && ref->lsd ? format_metric(*ref->lsd, 1) : "n/a";
      std::snprintf(line, sizeof line, "   | %-17s %8s %6s", "", rs.c_str(), rl.c_str());
      os << line;
    }
    os << '\n';
    if (r.status.rfind("error", 0) == 0) os << "    " << r.status << '\n';
  }
  if (footnote) os << "* tracks with exact reconstruction (SNR inf) are left out of the SNR mean\n";
  return os.str();
}

inline std::string render_csv(const EvalReport& rep) {
  std::ostringstream os;
  os << "kind,task,r,method,track,status,snr_db,lsd\n";
  for (const auto& r : rep.rows) {
    const std::string st = r.status.rfind("error", 0) == 0 ? "error" : r.status;
    os << "aggregate," << r.task << ',' << r.r << ',' << r.method << ",," << st << ',' << format_metric(r.snr, 6) << ','
       << format_metric(r.lsd, 6) << '\n';
  }
  const std::string task = rep.rows.empty() ? "" : rep.rows.front().task;
  const int rr = rep.rows.empty() ? 0 : rep.rows.front().r;
  for (const auto& d : rep.detail) {
    os << "track," << task << ',' << rr << ',' << d.method << ',' << d.track << ",ok," << format_metric(d.snr, 6) << ','
       << format_metric(d.lsd, 6) << '\n';
  }
  return os.str();
}

/// Full reference accuracy table, one line per (task, r, method).
inline std::string render_reference_table() {
  std::ostringstream os;
  os << "reference results (SNR dB / LSD)\n";
  char line[128];
  for (const auto& c : reference_table()) {
    const std::string s = c.snr ? format_metric(*c.snr, 1) : "n/a";
    const std::string l = c.lsd ? format_metric(*c.lsd, 1) : "n/a";
    std::snprintf(line, sizeof line, "  %-14s r=%d %-7s %6s %6s\n", c.task.c_str(), c.r, c.method.c_str(), s.c_str(), l.c_str());
    os << line;
  }
  return os.str();
}

inline std::string render_lpf_grid(const std::vector<LpfGridCell>& cells, bool with_refs) {
  std::ostringstream os;
  char line[160];
  os << "LPF sensitivity (rows: train, columns: test; SNR dB / LSD)\n";
  std::snprintf(line, sizeof line, "%-12s %18s %18s\n", "", "LPF (test)", "No LPF (test)");
  os << line;
  for (bool tr : {true, false}) {
    std::string cols[2];
    for (const auto& c : cells) {
      if (c.train_lpf == tr) cols[c.test_lpf ? 0 : 1] = format_metric(c.snr) + " / " + format_metric(c.lsd);
    }
    std::snprintf(line, sizeof line, "%-12s %18s %18s\n", tr ? "LPF" : "No LPF", cols[0].c_str(), cols[1].c_str());
    os << line;
  }
  if (with_refs) {
    os << "reference (Piano, r=2)\n";
    for (bool tr : {true, false}) {
      std::string cols[2];
      for (const auto& c : lpf_reference_grid()) {
        if (c.train_lpf == tr) cols[c.test_lpf ? 0 : 1] = format_metric(c.snr) + " / " + format_metric(c.lsd, 1);
      }
      std::snprintf(line, sizeof line, "%-12s %18s %18s\n", tr ? "LPF" : "No LPF", cols[0].c_str(), cols[1].c_str());
      os << line;
    }
  }
  return os.str();
}

}  // namespace bwex
