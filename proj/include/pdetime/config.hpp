#pragma once

// Experiment configuration.
//
// Grammar (one item per line, whitespace around tokens ignored):
//
//   config  := { line }
//   line    := comment | section | entry | blank
//   comment := ('#' | ';') any-text
//   section := '[' name ']'
//   entry   := key '=' value
//
// Keys are addressed as "section.key". Only keys listed in Config::defaults()
// are accepted, both in files and in --set overrides. Lists are
// comma-separated; booleans are true/false.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pdetime/data.hpp"
#include "pdetime/errors.hpp"
#include "pdetime/model.hpp"
#include "pdetime/trainer.hpp"

namespace pdetime {

class Config {
 public:
  Config() {
    for (const auto& [k, v] : defaults()) values_.emplace(k, v);
  }

  static const std::vector<std::pair<std::string, std::string>>& defaults() {
    static const std::vector<std::pair<std::string, std::string>> d = {
        {"data.path", ""},
        {"data.name", ""},
        {"data.split", "0.6,0.2,0.2"},
        {"data.horizons", "96"},
        {"data.mu", "1"},
        {"data.train_stride", "1"},
        {"data.eval_stride", "1"},
        {"data.standardize", "true"},
        {"data.raw_metrics", "false"},
        {"model.d", "64"},
        {"model.k", "5"},
        {"model.n_layers", "1"},
        {"model.n_heads", "1"},
        {"model.patch", "12"},
        {"model.lambda", "1.0"},
        {"model.cff_scales", "8"},
        {"model.use_temporal", "true"},
        {"model.use_spatial", "true"},
        {"model.use_initial", "true"},
        {"model.use_solver", "true"},
        {"train.lr", "0.001"},
        {"train.batch_size", "32"},
        {"train.epochs", "10"},
        {"train.patience", "3"},
        {"train.seed", "2024"},
        {"train.clip_norm", "5.0"},
        {"train.beta", "1.0"},
        {"baseline.lambda", "1.0"},
    };
    return d;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    it->second = value;
  }

  /// Applies "key=value".
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const std::string& s = str(key);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size() || !std::isfinite(v)) throw ConfigError(key + ": expected a number, got '" + s + "'");
    return v;
  }

  std::int64_t integer(const std::string& key) const {
    const std::string& s = str(key);
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size()) throw ConfigError(key + ": expected an integer, got '" + s + "'");
    return v;
  }

  std::size_t count(const std::string& key, std::int64_t min = 1) const {
    const auto v = integer(key);
    if (v < min) throw ConfigError(key + ": must be >= " + std::to_string(min));
    return static_cast<std::size_t>(v);
  }

  bool boolean(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + s + "'");
  }

  std::vector<double> real_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (item.empty() || used != item.size()) throw ConfigError(key + ": bad list element '" + item + "'");
      out.push_back(v);
    }
    return out;
  }

  /// Parses the section/key grammar above, overriding defaults.
  static Config parse(std::istream& in) {
    Config c;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      line = trim(line);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string full = section.empty() ? key : section + "." + key;
      if (!c.has(full)) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + full + "'");
      c.set(full, trim(line.substr(eq + 1)));
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in);
  }

  /// Fully resolved configuration in the same grammar; parse(snapshot()) == *this.
  std::string snapshot() const {
    std::ostringstream os;
    std::string section;
    for (const auto& [key, unused] : defaults()) {
      const auto dot = key.find('.');
      const std::string sec = key.substr(0, dot);
      if (sec != section) {
        if (!section.empty()) os << '\n';
        os << '[' << sec << "]\n";
        section = sec;
      }
      os << key.substr(dot + 1) << " = " << values_.at(key) << '\n';
    }
    return os.str();
  }

  bool operator==(const Config& o) const { return values_ == o.values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed views
// ---------------------------------------------------------------------------

inline constexpr std::size_t kAllowedMu[] = {1, 3, 5, 7, 9};

inline std::vector<std::size_t> horizons(const Config& c) {
  std::vector<std::size_t> out;
  for (double h : c.real_list("data.horizons")) {
    if (h < 1 || h != std::floor(h)) throw ConfigError("data.horizons: entries must be positive integers");
    out.push_back(static_cast<std::size_t>(h));
  }
  if (out.empty()) throw ConfigError("data.horizons: at least one horizon required");
  return out;
}

inline std::size_t lookback_multiplier(const Config& c) {
  const std::size_t mu = c.count("data.mu");
  if (std::find(std::begin(kAllowedMu), std::end(kAllowedMu), mu) == std::end(kAllowedMu))
    throw ConfigError("data.mu must be one of 1,3,5,7,9");
  return mu;
}

inline SplitSpec split_spec(const Config& c) {
  const auto r = c.real_list("data.split");
  if (r.size() != 3) throw ConfigError("data.split: expected three ratios");
  SplitSpec s{r[0], r[1], r[2]};
  validate(s);
  return s;
}

/// Model configuration for horizon H on a dataset with `channels` channels
/// and `temporal_dim` calendar features.
inline ModelConfig model_config(const Config& c, std::size_t H, std::size_t channels, std::size_t temporal_dim) {
  ModelConfig m;
  m.encoder.horizon = H;
  m.encoder.lookback = lookback_multiplier(c) * H;
  m.encoder.channels = channels;
  m.encoder.temporal_dim = temporal_dim;
  m.encoder.d = c.count("model.d", 2);
  m.encoder.k = c.count("model.k");
  m.encoder.n_layers = c.count("model.n_layers");
  m.encoder.n_heads = c.count("model.n_heads");
  m.encoder.cff_scales = c.count("model.cff_scales");
  m.encoder.use_temporal = c.boolean("model.use_temporal");
  m.encoder.use_spatial = c.boolean("model.use_spatial");
  m.patch = c.count("model.patch");
  m.ridge_lambda = c.real("model.lambda");
  m.use_initial = c.boolean("model.use_initial");
  m.use_solver = c.boolean("model.use_solver");
  validate(m);
  return m;
}

inline TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.lr = c.real("train.lr");
  if (!(t.lr > 0.0)) throw ConfigError("train.lr must be positive");
  t.batch_size = c.count("train.batch_size");
  t.epochs = c.count("train.epochs", 0);
  t.patience = c.count("train.patience", 0);
  t.seed = static_cast<std::uint64_t>(c.integer("train.seed"));
  t.clip_norm = c.real("train.clip_norm");
  t.beta = c.real("train.beta");
  if (!(t.beta > 0.0)) throw ConfigError("train.beta must be positive");
  return t;
}

}  // namespace pdetime
