#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "pdetime/calendar.hpp"
#include "pdetime/data.hpp"
#include "pdetime/rng.hpp"

namespace pdetime {

struct SinusoidSpec {
  std::size_t length = 4000;
  std::size_t channels = 3;
  double noise_std = 0.01;
  std::uint64_t seed = 2024;
};

/// Hourly series x_t = sin(2 pi t/24 + phi_c) + 0.1 sin(2 pi t/168 + phi_c) + N(0, noise^2)
/// with phases phi_c = 2 pi c / C, starting 2016-07-01 00:00:00.
inline TimeSeriesDataset make_sinusoid_dataset(const SinusoidSpec& spec = {}) {
  TimeSeriesDataset ds;
  ds.freq = Frequency::Hourly;
  for (std::size_t c = 0; c < spec.channels; ++c) ds.channel_names.push_back("s" + std::to_string(c));
  Rng rng = substream(spec.seed, "synthetic");
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  const Timestamp start = *parse_timestamp("2016-07-01 00:00:00");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t t = 0; t < spec.length; ++t) {
    ds.timestamps.push_back(start + std::chrono::hours{static_cast<long>(t)});
    for (std::size_t c = 0; c < spec.channels; ++c) {
      const double phase = two_pi * static_cast<double>(c) / static_cast<double>(spec.channels);
      const double td = static_cast<double>(t);
      ds.values.push_back(std::sin(two_pi * td / 24.0 + phase) + 0.1 * std::sin(two_pi * td / 168.0 + phase) +
                          noise(rng));
    }
  }
  return ds;
}

}  // namespace pdetime
