#pragma once

// Experiment runner behind the command-line tool: resolves configuration,
// loads data, and writes the run directory
//
//   metrics.csv               dataset,horizon,variant,mse,mae,runtime_s,seed
//   config-resolved.snapshot  fully resolved configuration (re-loadable)
//   log.txt                   progress, warnings, per-epoch losses
//   checkpoint_<variant>_H<h>.bin
//
// Exit codes: 0 success, 1 selftest failure or I/O error, 2 bad
// configuration or input data, 3 numeric failure during training.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "pdetime/baselines.hpp"
#include "pdetime/config.hpp"
#include "pdetime/data.hpp"
#include "pdetime/errors.hpp"
#include "pdetime/model.hpp"
#include "pdetime/selftest.hpp"
#include "pdetime/synthetic.hpp"
#include "pdetime/trainer.hpp"

namespace pdetime {

enum class Command { Train, Evaluate, Ablate, Baseline, Selftest };

struct ExperimentSpec {
  Command command = Command::Train;
  std::string config_path;             // empty: built-in defaults
  std::string out_dir = "run";
  std::vector<std::string> overrides;  // "section.key=value"
  std::optional<std::uint64_t> seed;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;  // evaluate a single file instead of the run directory
};

struct ReportRow {
  std::string dataset;
  std::size_t horizon = 0;
  std::string variant;
  double mse = 0.0, mae = 0.0, runtime_s = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kMetricsHeader = "dataset,horizon,variant,mse,mae,runtime_s,seed";

/// Shortest round-trip decimal.
inline std::string format_real(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string metrics_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    char rt[32];
    std::snprintf(rt, sizeof rt, "%.3f", r.runtime_s);
    os << r.dataset << ',' << r.horizon << ',' << r.variant << ',' << format_real(r.mse) << ',' << format_real(r.mae)
       << ',' << rt << ',' << r.seed << '\n';
  }
  return os.str();
}

/// Defaults, then the config file, then --set overrides, then --seed and
/// --dataset.
inline Config resolve_config(const ExperimentSpec& spec) {
  Config c = spec.config_path.empty() ? Config{} : Config::load(spec.config_path);
  for (const auto& o : spec.overrides) c.apply_override(o);
  if (spec.seed) c.set("train.seed", std::to_string(*spec.seed));
  if (spec.dataset) c.set("data.path", *spec.dataset);
  return c;
}

inline constexpr const char* kSyntheticSinusoid = "synthetic:sinusoid";

/// Raw (unstandardized) dataset named by data.path.
inline TimeSeriesDataset load_dataset(const Config& c) {
  const std::string& path = c.str("data.path");
  if (path.empty()) throw ConfigError("data.path is not set (use --dataset or data.path)");
  if (path == kSyntheticSinusoid) {
    SinusoidSpec s;
    s.seed = static_cast<std::uint64_t>(c.integer("train.seed"));
    return make_sinusoid_dataset(s);
  }
  if (!std::filesystem::exists(path)) throw ConfigError("dataset '" + path + "' does not exist");
  return load_csv(path);
}

inline std::string dataset_name(const Config& c) {
  if (!c.str("data.name").empty()) return c.str("data.name");
  const std::string& path = c.str("data.path");
  if (path == kSyntheticSinusoid) return "sinusoid";
  return std::filesystem::path(path).stem().string();
}

/// Dataset ready for windowing: split ranges plus (optionally) standardized values.
struct PreparedData {
  TimeSeriesDataset ds;
  SplitRanges split;
  std::vector<double> metric_scale;  // per-channel std when raw-space metrics are requested
};

inline PreparedData prepare_data(const Config& c) {
  PreparedData p;
  TimeSeriesDataset raw = load_dataset(c);
  p.split = chronological_split(raw.length(), split_spec(c));
  if (c.boolean("data.standardize")) {
    p.ds = standardize(raw, p.split.train);
    if (c.boolean("data.raw_metrics")) p.metric_scale = p.ds.stddev;
  } else {
    p.ds = std::move(raw);
  }
  return p;
}

struct SplitWindows {
  std::vector<ForecastWindow> train, val, test;
};

inline SplitWindows split_windows(const Config& c, const PreparedData& p, std::size_t H) {
  const std::size_t L = lookback_multiplier(c) * H;
  const std::size_t ts = c.count("data.train_stride"), es = c.count("data.eval_stride");
  return {make_windows(p.ds, p.split.train, L, H, ts), make_windows(p.ds, p.split.val, L, H, es),
          make_windows(p.ds, p.split.test, L, H, es)};
}

struct Variant {
  std::string name;
  std::function<void(Config&)> apply;
};

/// Ablation variants in report order.
inline std::vector<Variant> ablation_variants() {
  auto off = [](std::initializer_list<const char*> keys) {
    std::vector<std::string> k(keys.begin(), keys.end());
    return [k](Config& c) {
      for (const auto& key : k) c.set(key, "false");
    };
  };
  return {
      {"full", [](Config&) {}},
      {"-Temporal", off({"model.use_temporal"})},
      {"-Spatial", off({"model.use_spatial"})},
      {"-Initial", off({"model.use_initial"})},
      {"-Temporal-Spatial", off({"model.use_temporal", "model.use_spatial"})},
      {"-All", off({"model.use_temporal", "model.use_spatial", "model.use_initial", "model.use_solver"})},
  };
}

inline std::string checkpoint_name(const std::string& variant, std::size_t H) {
  return "checkpoint_" + variant + "_H" + std::to_string(H) + ".bin";
}

class RunContext {
 public:
  RunContext(std::filesystem::path dir, std::ostream& console) : dir_(std::move(dir)), console_(console) {}

  void open(const Config& c) {
    std::filesystem::create_directories(dir_);
    log_.open(dir_ / "log.txt");
    if (!log_) throw IngestionError("cannot write to output directory '" + dir_.string() + "'");
    std::ofstream snap(dir_ / "config-resolved.snapshot");
    snap << c.snapshot();
  }

  void log(const std::string& line) {
    if (log_) log_ << line << '\n';
  }

  void say(const std::string& line) {
    log(line);
    console_ << line << '\n';
  }

  void write_metrics(const std::vector<ReportRow>& rows) {
    std::ofstream out(dir_ / "metrics.csv");
    out << metrics_csv(rows);
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::ostream& console_;
  std::ofstream log_;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string metrics_line(const ReportRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s H=%zu %s: mse=%.6g mae=%.6g (%.1fs)", r.dataset.c_str(), r.horizon,
                r.variant.c_str(), r.mse, r.mae, r.runtime_s);
  return buf;
}

/// Trains and evaluates one variant at one horizon, saving its checkpoint.
inline ReportRow train_variant(const Config& c, const PreparedData& data, std::size_t H, const std::string& variant,
                               RunContext& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const SplitWindows w = split_windows(c, data, H);
  const ModelConfig mc = model_config(c, H, data.ds.channels(), temporal_feature_count(data.ds.freq));
  const TrainConfig tc = train_config(c);
  ctx.log("[" + variant + " H=" + std::to_string(H) + "] train/val/test windows: " + std::to_string(w.train.size()) +
          "/" + std::to_string(w.val.size()) + "/" + std::to_string(w.test.size()));
  const Model init = init_model(mc, tc.seed);
  TrainResult res = train(init, tc, w.train, w.val, [&](const std::string& s) { ctx.log("[" + variant + "] " + s); });
  res.checkpoint.config_snapshot = c.snapshot();
  save_checkpoint(res.checkpoint, (ctx.dir() / checkpoint_name(variant, H)).string());
  const Metrics m = evaluate(res.checkpoint.model, w.test, data.metric_scale);
  ReportRow row{dataset_name(c), H, variant, m.mse, m.mae, seconds_since(t0), tc.seed};
  ctx.say(metrics_line(row));
  return row;
}

}  // namespace detail

inline std::vector<ReportRow> run_train(const Config& c, const PreparedData& data, RunContext& ctx) {
  std::vector<ReportRow> rows;
  for (std::size_t H : horizons(c)) rows.push_back(detail::train_variant(c, data, H, "full", ctx));
  return rows;
}

inline std::vector<ReportRow> run_ablate(const Config& base, const PreparedData& data, RunContext& ctx) {
  std::vector<ReportRow> rows;
  for (std::size_t H : horizons(base)) {
    double full_mse = 0.0;
    for (const auto& v : ablation_variants()) {
      Config c = base;
      v.apply(c);
      rows.push_back(detail::train_variant(c, data, H, v.name, ctx));
      if (v.name == "full") {
        full_mse = rows.back().mse;
      } else {
        ctx.say("  delta mse vs full: " + format_real(rows.back().mse - full_mse));
      }
    }
  }
  return rows;
}

inline std::vector<ReportRow> run_baseline(const Config& c, const PreparedData& data, RunContext& ctx) {
  std::vector<ReportRow> rows;
  const auto seed = static_cast<std::uint64_t>(c.integer("train.seed"));
  for (std::size_t H : horizons(c)) {
    auto t0 = std::chrono::steady_clock::now();
    const SplitWindows w = split_windows(c, data, H);
    const Metrics p = persistence_metrics(w.test, data.metric_scale);
    rows.push_back({dataset_name(c), H, "persistence", p.mse, p.mae, detail::seconds_since(t0), seed});
    ctx.say(detail::metrics_line(rows.back()));
    t0 = std::chrono::steady_clock::now();
    const LinearLookbackBaseline lin(w.train, c.real("baseline.lambda"));
    const Metrics l = lin.evaluate(w.test, data.metric_scale);
    rows.push_back({dataset_name(c), H, "linear", l.mse, l.mae, detail::seconds_since(t0), seed});
    ctx.say(detail::metrics_line(rows.back()));
  }
  return rows;
}

/// Re-evaluates saved checkpoints on the test split: either the one given
/// explicitly or every checkpoint_<variant>_H<h>.bin in the run directory.
inline std::vector<ReportRow> run_evaluate(const Config& c, const PreparedData& data, RunContext& ctx,
                                           const std::optional<std::string>& checkpoint) {
  std::vector<std::pair<std::string, std::filesystem::path>> files;  // (variant, path)
  const std::regex pattern(R"(checkpoint_(.+)_H(\d+)\.bin)");
  if (checkpoint) {
    std::smatch m;
    const std::string fname = std::filesystem::path(*checkpoint).filename().string();
    files.emplace_back(std::regex_match(fname, m, pattern) ? m[1].str() : "full", *checkpoint);
  } else {
    for (const auto& e : std::filesystem::directory_iterator(ctx.dir())) {
      std::smatch m;
      const std::string fname = e.path().filename().string();
      if (std::regex_match(fname, m, pattern)) files.emplace_back(m[1].str(), e.path());
    }
    std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  }
  if (files.empty()) throw ConfigError("evaluate: no checkpoints found in '" + ctx.dir().string() + "'");
  std::vector<ReportRow> rows;
  for (const auto& [variant, path] : files) {
    const auto t0 = std::chrono::steady_clock::now();
    const Checkpoint ck = load_checkpoint(path.string());
    const auto& mc = ck.model.config;
    if (mc.encoder.channels != data.ds.channels())
      throw ConfigError("checkpoint '" + path.string() + "' expects " + std::to_string(mc.encoder.channels) +
                        " channels, dataset has " + std::to_string(data.ds.channels()));
    const std::size_t L = mc.encoder.lookback, H = mc.encoder.horizon;
    const auto test = make_windows(data.ds, data.split.test, L, H, c.count("data.eval_stride"));
    const Metrics m = evaluate(ck.model, test, data.metric_scale);
    rows.push_back({dataset_name(c), H, variant, m.mse, m.mae, detail::seconds_since(t0),
                    static_cast<std::uint64_t>(c.integer("train.seed"))});
    ctx.say(detail::metrics_line(rows.back()));
  }
  return rows;
}

inline int run_selftest_command(std::ostream& console, std::uint64_t seed) {
  bool ok = true;
  for (const auto& r : run_selftest(seed)) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.2fs)", r.seconds);
    console << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << buf << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

/// Runs one experiment command; returns the process exit code.
inline int run_experiment(const ExperimentSpec& spec, std::ostream& console = std::cout,
                          std::ostream& errors = std::cerr) {
  try {
    const Config c = resolve_config(spec);
    if (spec.command == Command::Selftest)
      return run_selftest_command(console, static_cast<std::uint64_t>(c.integer("train.seed")));

    // Validate everything that can be validated before touching the output directory.
    for (std::size_t H : horizons(c)) {
      (void)model_config(c, H, 1, 4);
      (void)train_config(c);
    }
    const PreparedData data = prepare_data(c);

    RunContext ctx(spec.out_dir, console);
    ctx.open(c);
    for (const auto& w : data.ds.warnings) ctx.say("warning: " + w);
    std::vector<ReportRow> rows;
    switch (spec.command) {
      case Command::Train: rows = run_train(c, data, ctx); break;
      case Command::Ablate: rows = run_ablate(c, data, ctx); break;
      case Command::Baseline: rows = run_baseline(c, data, ctx); break;
      case Command::Evaluate: rows = run_evaluate(c, data, ctx, spec.checkpoint); break;
      case Command::Selftest: break;
    }
    ctx.write_metrics(rows);
    return 0;
  } catch (const ConfigError& e) {
    errors << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const IngestionError& e) {
    errors << "input error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionError& e) {
    errors << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    errors << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    errors << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace pdetime
