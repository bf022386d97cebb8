#pragma once

// Input representations: the normalized time-index grid and its
// concatenated Fourier features, sinusoidal/GeLU feature stacks, and
// calendar features scaled into [0, 1].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pdetime/calendar.hpp"
#include "pdetime/diffarray.hpp"
#include "pdetime/errors.hpp"
#include "pdetime/nn.hpp"
#include "pdetime/rng.hpp"

namespace pdetime {

// ---------------------------------------------------------------------------
// Time-index grid
// ---------------------------------------------------------------------------

struct TimeIndexGrid {
  std::vector<double> values;
  std::size_t lookback = 0;
  std::size_t horizon = 0;

  std::size_t size() const { return values.size(); }
  /// Column tensor [(L+H) x 1].
  Tensor as_column() const { return Tensor::from({values.size(), 1}, values); }
};

/// values[i] = i / (L + H) for i in [0, L + H).
inline TimeIndexGrid time_index_grid(std::size_t lookback, std::size_t horizon) {
  if (lookback == 0 || horizon == 0) throw ContractError("time_index_grid: lookback and horizon must be >= 1");
  const std::size_t total = lookback + horizon;
  TimeIndexGrid g{std::vector<double>(total), lookback, horizon};
  for (std::size_t i = 0; i < total; ++i) g.values[i] = static_cast<double>(i) / static_cast<double>(total);
  return g;
}

// ---------------------------------------------------------------------------
// Concatenated Fourier features
// ---------------------------------------------------------------------------

/// Frozen random frequency matrices, one [half_dim x 1] matrix per scale s,
/// with entries drawn from a zero-mean normal of variance 2^s.
struct CffBank {
  std::vector<Tensor> scale_matrices;

  std::size_t half_dim() const { return scale_matrices.empty() ? 0 : scale_matrices.front().dim(0); }
  std::size_t num_scales() const { return scale_matrices.size(); }
  std::size_t output_dim() const { return 2 * half_dim() * num_scales(); }

  static CffBank sample(std::size_t half_dim, std::size_t num_scales, Rng& rng) {
    if (half_dim == 0 || num_scales == 0) throw ContractError("CffBank: half_dim and num_scales must be >= 1");
    CffBank bank;
    for (std::size_t s = 0; s < num_scales; ++s) {
      std::normal_distribution<double> dist(0.0, std::sqrt(std::ldexp(1.0, static_cast<int>(s))));
      std::vector<double> b(half_dim);
      for (auto& v : b) v = dist(rng);
      bank.scale_matrices.push_back(Tensor::from({half_dim, 1}, std::move(b)));
    }
    return bank;
  }

  void collect(ParameterList& out, const std::string& prefix) const {
    for (std::size_t s = 0; s < scale_matrices.size(); ++s)
      out.push_back({prefix + ".B" + std::to_string(s), scale_matrices[s]});
  }
};

/// Row i = concat over s of [sin(2 pi B_s tau_i), cos(2 pi B_s tau_i)].
inline Tensor cff_encode(const TimeIndexGrid& grid, const CffBank& bank) {
  if (bank.num_scales() == 0) throw ContractError("cff_encode: bank not initialized");
  const std::size_t half = bank.half_dim();
  const std::size_t width = bank.output_dim();
  std::vector<double> out(grid.size() * width);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double* row = out.data() + i * width;
    for (std::size_t s = 0; s < bank.num_scales(); ++s) {
      const auto b = bank.scale_matrices[s].data();
      for (std::size_t j = 0; j < half; ++j) {
        const double arg = 2.0 * std::numbers::pi * b[j] * grid.values[i];
        row[s * 2 * half + j] = std::sin(arg);
        row[s * 2 * half + half + j] = std::cos(arg);
      }
    }
  }
  return Tensor::from({grid.size(), width}, std::move(out));
}

// ---------------------------------------------------------------------------
// Feature stacks
// ---------------------------------------------------------------------------

enum class Activation { Sine, Gelu };

/// k sequential affine + activation layers. Sine layers compute
/// sin(omega * (W x + b)).
struct SirenStack {
  std::vector<Linear> layers;
  Activation activation = Activation::Sine;
  double omega = 1.0;

  std::size_t depth() const { return layers.size(); }
  std::size_t in_features() const { return layers.front().in_features(); }
  std::size_t out_features() const { return layers.back().out_features(); }

  /// Sine stacks: first layer uniform +-1/fan_in, deeper layers
  /// uniform +-sqrt(6/fan_in)/omega, frequency omega. GeLU stacks:
  /// +-1/sqrt(fan_in).
  static SirenStack make(std::size_t in, std::size_t width, std::size_t depth, Activation act, Rng& rng,
                         double omega = 30.0) {
    if (depth == 0) throw ContractError("SirenStack: depth must be >= 1");
    SirenStack st;
    st.activation = act;
    if (act == Activation::Sine) st.omega = omega;
    std::size_t fan_in = in;
    for (std::size_t i = 0; i < depth; ++i) {
      double bound;
      if (act == Activation::Gelu) {
        bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      } else if (i == 0) {
        bound = 1.0 / static_cast<double>(fan_in);
      } else {
        bound = std::sqrt(6.0 / static_cast<double>(fan_in)) / omega;
      }
      st.layers.push_back(Linear::uniform(fan_in, width, bound, rng));
      fan_in = width;
    }
    return st;
  }

  void collect(ParameterList& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + "." + std::to_string(i));
  }
};

inline Tensor siren_forward(const Tensor& input, const SirenStack& stack) {
  Tensor h = input;
  for (const auto& layer : stack.layers) {
    h = layer(h);
    h = stack.activation == Activation::Sine ? sin(stack.omega == 1.0 ? h : scale(h, stack.omega)) : gelu(h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Calendar features
// ---------------------------------------------------------------------------

enum class Frequency { Hourly, QuarterHourly, TenMinutely };

inline std::int64_t frequency_seconds(Frequency f) {
  switch (f) {
    case Frequency::Hourly: return 3600;
    case Frequency::QuarterHourly: return 900;
    case Frequency::TenMinutely: return 600;
  }
  return 0;
}

inline const char* frequency_name(Frequency f) {
  switch (f) {
    case Frequency::Hourly: return "hourly";
    case Frequency::QuarterHourly: return "quarter_hourly";
    case Frequency::TenMinutely: return "ten_minutely";
  }
  return "?";
}

inline std::size_t temporal_feature_count(Frequency f) { return f == Frequency::Hourly ? 4 : 5; }

struct TemporalFeatures {
  Tensor matrix;  // [T x t]
  std::vector<std::string> feature_names;
};

/// Calendar fields scaled to [0, 1]:
///   day-of-year (doy-1)/365, month (m-1)/11, day-of-week (Mon=0)/6,
///   hour/23, and for sub-hourly data minute/59 (15-min) or minute/50 (10-min).
inline TemporalFeatures temporal_features(const std::vector<Timestamp>& timestamps, Frequency freq) {
  const std::int64_t step = frequency_seconds(freq);
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if ((timestamps[i] - timestamps[i - 1]).count() != step) {
      throw IngestionError("temporal_features: spacing at row " + std::to_string(i) + " is not " +
                           std::to_string(step) + " s (" + frequency_name(freq) + ")");
    }
  }
  TemporalFeatures tf;
  tf.feature_names = {"day_of_year", "month_of_year", "day_of_week", "hour_of_day"};
  const bool minutes = freq != Frequency::Hourly;
  if (minutes) tf.feature_names.push_back("minute_of_hour");
  const double minute_den = freq == Frequency::TenMinutely ? 50.0 : 59.0;
  const std::size_t width = tf.feature_names.size();
  std::vector<double> m(timestamps.size() * width);
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    const auto f = calendar_fields(timestamps[i]);
    double* row = m.data() + i * width;
    row[0] = std::min(1.0, (f.day_of_year - 1) / 365.0);
    row[1] = (f.month - 1) / 11.0;
    row[2] = f.day_of_week / 6.0;
    row[3] = f.hour / 23.0;
    if (minutes) row[4] = std::min(1.0, f.minute / minute_den);
  }
  tf.matrix = Tensor::from({timestamps.size(), width}, std::move(m));
  return tf;
}

}  // namespace pdetime
