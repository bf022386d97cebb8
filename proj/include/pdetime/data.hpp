#pragma once

// CSV ingestion, chronological splits, train-split standardization and
// sliding-window generation.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pdetime/calendar.hpp"
#include "pdetime/diffarray.hpp"
#include "pdetime/errors.hpp"
#include "pdetime/features.hpp"
#include "pdetime/window.hpp"

namespace pdetime {

struct TimeSeriesDataset {
  std::vector<Timestamp> timestamps;
  std::vector<double> values;  // row-major [T x C]
  std::vector<std::string> channel_names;
  Frequency freq = Frequency::Hourly;
  std::vector<double> mean;  // per-channel train statistics, empty until standardized
  std::vector<double> stddev;
  std::vector<std::string> warnings;

  std::size_t length() const { return timestamps.size(); }
  std::size_t channels() const { return channel_names.size(); }
  double at(std::size_t t, std::size_t c) const { return values[t * channels() + c]; }
  bool standardized() const { return !mean.empty(); }
};

inline Frequency frequency_from_seconds(std::int64_t seconds) {
  switch (seconds) {
    case 3600: return Frequency::Hourly;
    case 900: return Frequency::QuarterHourly;
    case 600: return Frequency::TenMinutely;
    default:
      throw IngestionError("unsupported sampling interval of " + std::to_string(seconds) +
                           " s (expected 3600, 900 or 600)");
  }
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Header "date,<channel>,...", one timestamp plus C decimals per row.
/// Row numbers in errors are 1-based file lines.
inline TimeSeriesDataset parse_csv(std::istream& in) {
  TimeSeriesDataset ds;
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("empty CSV input");
  auto header = detail::split_csv_line(line);
  if (header.size() < 2 || detail::trim(header[0]) != "date") {
    throw IngestionError("CSV header must start with a 'date' column followed by at least one channel");
  }
  for (std::size_t i = 1; i < header.size(); ++i) ds.channel_names.emplace_back(detail::trim(header[i]));
  const std::size_t C = ds.channel_names.size();

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != C + 1) {
      throw IngestionError("row " + std::to_string(line_no) + ": expected " + std::to_string(C + 1) +
                           " fields, found " + std::to_string(cells.size()));
    }
    const auto ts = parse_timestamp(detail::trim(cells[0]));
    if (!ts) throw IngestionError("row " + std::to_string(line_no) + ": unparsable date '" + std::string(cells[0]) + "'");
    ds.timestamps.push_back(*ts);
    for (std::size_t c = 1; c <= C; ++c) {
      const std::string cell(detail::trim(cells[c]));
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (cell.empty() || used != cell.size() || !std::isfinite(v)) {
        throw IngestionError("row " + std::to_string(line_no) + ": non-numeric value '" + cell + "' in column '" +
                             ds.channel_names[c - 1] + "'");
      }
      ds.values.push_back(v);
    }
  }
  if (ds.timestamps.size() < 2) throw IngestionError("CSV needs at least two data rows to infer frequency");

  const std::int64_t step = (ds.timestamps[1] - ds.timestamps[0]).count();
  if (step <= 0) throw IngestionError("row 3: timestamps are not strictly increasing");
  ds.freq = frequency_from_seconds(step);
  for (std::size_t i = 1; i < ds.timestamps.size(); ++i) {
    const auto gap = (ds.timestamps[i] - ds.timestamps[i - 1]).count();
    if (gap != step) {
      throw IngestionError("row " + std::to_string(i + 2) + ": spacing of " + std::to_string(gap) +
                           " s breaks the uniform " + std::to_string(step) + " s grid (gap at " +
                           format_timestamp(ds.timestamps[i]) + ")");
    }
  }
  return ds;
}

inline TimeSeriesDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open dataset '" + path + "'");
  return parse_csv(in);
}

inline void write_csv(const TimeSeriesDataset& ds, std::ostream& out) {
  out << "date";
  for (const auto& n : ds.channel_names) out << ',' << n;
  out << '\n';
  char buf[64];
  for (std::size_t t = 0; t < ds.length(); ++t) {
    out << format_timestamp(ds.timestamps[t]);
    for (std::size_t c = 0; c < ds.channels(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.17g", ds.at(t, c));
      out << buf;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train = 0.6, val = 0.2, test = 0.2;
};

struct IndexRange {
  std::size_t begin = 0, end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

struct SplitRanges {
  IndexRange train, val, test;
};

inline void validate(const SplitSpec& s) {
  if (s.train < 0 || s.val < 0 || s.test < 0 || std::abs(s.train + s.val + s.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be nonnegative and sum to 1");
  }
}

/// Contiguous ranges: floor(T * ratio) for train and validation, remainder to test.
inline SplitRanges chronological_split(std::size_t length, const SplitSpec& s) {
  validate(s);
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(length) * s.train + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(length) * s.val + 1e-9));
  return {{0, n_train}, {n_train, n_train + n_val}, {n_train + n_val, length}};
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

/// Per-channel z-score with statistics from `train` only. Zero-variance
/// channels keep std = 1 and record a warning.
inline TimeSeriesDataset standardize(const TimeSeriesDataset& ds, IndexRange train) {
  if (train.size() == 0 || train.end > ds.length()) throw ConfigError("standardize: train range is empty or out of bounds");
  TimeSeriesDataset out = ds;
  const std::size_t C = ds.channels();
  out.mean.assign(C, 0.0);
  out.stddev.assign(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double mu = 0.0;
    for (std::size_t t = train.begin; t < train.end; ++t) mu += ds.at(t, c);
    mu /= static_cast<double>(train.size());
    double var = 0.0;
    for (std::size_t t = train.begin; t < train.end; ++t) var += (ds.at(t, c) - mu) * (ds.at(t, c) - mu);
    var /= static_cast<double>(train.size());
    double sd = std::sqrt(var);
    if (!(sd > 0.0)) {
      sd = 1.0;
      out.warnings.push_back("channel '" + ds.channel_names[c] + "' has zero variance on the train split; std clamped to 1");
    }
    out.mean[c] = mu;
    out.stddev[c] = sd;
    for (std::size_t t = 0; t < ds.length(); ++t) out.values[t * C + c] = (ds.at(t, c) - mu) / sd;
  }
  return out;
}

inline TimeSeriesDataset destandardize(const TimeSeriesDataset& ds) {
  if (!ds.standardized()) return ds;
  TimeSeriesDataset out = ds;
  const std::size_t C = ds.channels();
  for (std::size_t t = 0; t < ds.length(); ++t)
    for (std::size_t c = 0; c < C; ++c) out.values[t * C + c] = ds.at(t, c) * ds.stddev[c] + ds.mean[c];
  out.mean.clear();
  out.stddev.clear();
  return out;
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

inline std::size_t window_count(std::size_t range_length, std::size_t L, std::size_t H, std::size_t stride = 1) {
  if (range_length < L + H) return 0;
  return (range_length - (L + H)) / stride + 1;
}

/// Sliding windows fully contained in `range`, with temporal features and
/// the time-index grid aligned to the L + H positions.
inline std::vector<ForecastWindow> make_windows(const TimeSeriesDataset& ds, IndexRange range, std::size_t L,
                                                std::size_t H, std::size_t stride = 1) {
  if (L == 0 || H == 0 || stride == 0) throw ConfigError("make_windows: L, H and stride must be >= 1");
  if (range.end > ds.length() || range.size() < L + H) {
    throw ConfigError("make_windows: range of length " + std::to_string(range.size()) + " is shorter than the required minimum L+H = " +
                      std::to_string(L + H));
  }
  const std::size_t C = ds.channels();
  const std::vector<Timestamp> stamps(ds.timestamps.begin() + static_cast<std::ptrdiff_t>(range.begin),
                                      ds.timestamps.begin() + static_cast<std::ptrdiff_t>(range.end));
  const TemporalFeatures tf = temporal_features(stamps, ds.freq);
  const std::size_t t_dim = tf.feature_names.size();
  const TimeIndexGrid grid = time_index_grid(L, H);
  const auto feat = tf.matrix.data();

  std::vector<ForecastWindow> out;
  const std::size_t n = window_count(range.size(), L, H, stride);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t local = i * stride;
    const std::size_t o = range.begin + local;
    ForecastWindow w;
    w.offset = o;
    w.grid = grid;
    w.X = Tensor::from({L, C}, std::vector<double>(ds.values.begin() + static_cast<std::ptrdiff_t>(o * C),
                                                   ds.values.begin() + static_cast<std::ptrdiff_t>((o + L) * C)));
    w.Y = Tensor::from({H, C}, std::vector<double>(ds.values.begin() + static_cast<std::ptrdiff_t>((o + L) * C),
                                                   ds.values.begin() + static_cast<std::ptrdiff_t>((o + L + H) * C)));
    w.x_init = Tensor::from({C}, std::vector<double>(ds.values.begin() + static_cast<std::ptrdiff_t>((o + L - 1) * C),
                                                     ds.values.begin() + static_cast<std::ptrdiff_t>((o + L) * C)));
    w.temporal = Tensor::from({L + H, t_dim}, std::vector<double>(feat.begin() + static_cast<std::ptrdiff_t>(local * t_dim),
                                                                  feat.begin() + static_cast<std::ptrdiff_t>((local + L + H) * t_dim)));
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace pdetime
