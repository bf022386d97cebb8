#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "pdetime/calendar.hpp"
#include "pdetime/errors.hpp"
#include "pdetime/features.hpp"
#include "test_util.hpp"

using namespace pdetime;
using testutil::random_tensor;

namespace {

// Standalone Gregorian helpers for the calendar oracle.
bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int day_of_year(int y, int m, int d) {
  static const int len[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  int n = d;
  for (int i = 1; i < m; ++i) n += len[i - 1] + (i == 2 && leap(y) ? 1 : 0);
  return n;
}

// Zeller's congruence, shifted so Monday = 0.
int weekday_monday0(int y, int m, int d) {
  if (m < 3) {
    m += 12;
    y -= 1;
  }
  const int K = y % 100, J = y / 100;
  const int h = (d + 13 * (m + 1) / 5 + K + K / 4 + J / 4 + 5 * J) % 7;  // 0 = Saturday
  return (h + 5) % 7;
}

std::vector<Timestamp> hourly(const char* start, std::size_t n, long step_s = 3600) {
  std::vector<Timestamp> out;
  const Timestamp t0 = *parse_timestamp(start);
  for (std::size_t i = 0; i < n; ++i) out.push_back(t0 + std::chrono::seconds{step_s * static_cast<long>(i)});
  return out;
}

}  // namespace

TEST(TimeIndexGrid, SmallCase) {
  EXPECT_EQ(time_index_grid(2, 2).values, (std::vector<double>{0.0, 0.25, 0.5, 0.75}));
}

TEST(TimeIndexGrid, EndpointsAndBound) {
  const auto g = time_index_grid(96, 96);
  ASSERT_EQ(g.size(), 192u);
  EXPECT_EQ(g.values[0], 0.0);
  EXPECT_EQ(g.values[191], 191.0 / 192.0);
  for (std::size_t L : {1, 3, 17})
    for (std::size_t H : {1, 5, 24}) {
      const auto gg = time_index_grid(L, H);
      EXPECT_LT(gg.values.back(), 1.0);
      for (std::size_t i = 1; i < gg.size(); ++i)
        EXPECT_NEAR(gg.values[i] - gg.values[i - 1], 1.0 / static_cast<double>(L + H), 1e-15);
    }
}

TEST(TimeIndexGrid, ZeroLengthIsContractError) {
  EXPECT_THROW(time_index_grid(0, 4), ContractError);
  EXPECT_THROW(time_index_grid(4, 0), ContractError);
}

TEST(Cff, ZeroTimeGivesSinZeroCosOne) {
  Rng rng = substream(1, "cff");
  const CffBank bank = CffBank::sample(3, 4, rng);
  const Tensor e = cff_encode(time_index_grid(2, 2), bank);
  ASSERT_EQ(e.shape(), (Shape{4, 24}));
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(e(0, s * 6 + j), 0.0);
      EXPECT_EQ(e(0, s * 6 + 3 + j), 1.0);
    }
}

TEST(Cff, RangeAndSingleScaleHandComputation) {
  CffBank bank;
  bank.scale_matrices.push_back(Tensor::from({1, 1}, {1.0}));
  const auto g = time_index_grid(5, 3);
  const Tensor e = cff_encode(g, bank);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(e(i, 0), std::sin(2.0 * std::numbers::pi * g.values[i]), 1e-15);
    EXPECT_NEAR(e(i, 1), std::cos(2.0 * std::numbers::pi * g.values[i]), 1e-15);
  }
  Rng rng = substream(2, "cff");
  const Tensor wide = cff_encode(time_index_grid(50, 50), CffBank::sample(8, 8, rng));
  for (double v : wide.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Cff, DeterministicUnderSeedAndScaleVariance) {
  Rng a = substream(2024, "cff"), b = substream(2024, "cff");
  const CffBank x = CffBank::sample(32, 8, a), y = CffBank::sample(32, 8, b);
  for (std::size_t s = 0; s < 8; ++s) EXPECT_EQ(x.scale_matrices[s].to_vector(), y.scale_matrices[s].to_vector());
  // Sample variance of many draws at scale s is close to 2^s.
  Rng r = substream(7, "cff");
  const CffBank big = CffBank::sample(20000, 4, r);
  for (std::size_t s = 0; s < 4; ++s) {
    double v = 0.0;
    for (double e : big.scale_matrices[s].data()) v += e * e;
    v /= 20000.0;
    EXPECT_NEAR(v / std::ldexp(1.0, static_cast<int>(s)), 1.0, 0.05) << "scale " << s;
  }
}

TEST(Siren, ZeroWeightsGiveZero) {
  SirenStack st;
  st.activation = Activation::Sine;
  st.layers.push_back({Tensor::zeros({3, 4}), Tensor::zeros({4})});
  st.layers.push_back({Tensor::zeros({4, 4}), Tensor::zeros({4})});
  Rng rng = substream(3, "t");
  const Tensor y = siren_forward(random_tensor({5, 3}, rng), st);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Siren, IdentityLayerIsSine) {
  SirenStack st;
  st.layers.push_back({Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2})});
  const Tensor x = Tensor::from({1, 2}, {1.5, -0.7});
  const Tensor y = siren_forward(x, st);
  EXPECT_NEAR(y(0, 0), std::sin(1.5), 1e-15);
  EXPECT_NEAR(y(0, 1), std::sin(-0.7), 1e-15);
}

TEST(Siren, TwoLayerStackMatchesUnrolledOracle) {
  Rng rng = substream(4, "t");
  const SirenStack st = SirenStack::make(3, 5, 2, Activation::Sine, rng);
  ASSERT_EQ(st.depth(), 2u);
  const Tensor x = random_tensor({4, 3}, rng);
  const Tensor y = siren_forward(x, st);
  const auto& l0 = st.layers[0];
  const auto& l1 = st.layers[1];
  for (std::size_t r = 0; r < 4; ++r) {
    std::vector<double> h(5);
    for (std::size_t j = 0; j < 5; ++j) {
      double s = l0.bias(j);
      for (std::size_t i = 0; i < 3; ++i) s += x(r, i) * l0.weight(i, j);
      h[j] = std::sin(st.omega * s);
    }
    for (std::size_t j = 0; j < 5; ++j) {
      double s = l1.bias(j);
      for (std::size_t i = 0; i < 5; ++i) s += h[i] * l1.weight(i, j);
      EXPECT_NEAR(y(r, j), std::sin(st.omega * s), 1e-13);
    }
  }
}

TEST(Siren, InitializationBoundsAndOutputRange) {
  Rng rng = substream(5, "t");
  const std::size_t fan = 16;
  const SirenStack st = SirenStack::make(8, fan, 5, Activation::Sine, rng);
  for (double w : st.layers[0].weight.data()) EXPECT_LE(std::abs(w), 1.0 / 8.0);
  for (std::size_t i = 1; i < 5; ++i)
    for (double w : st.layers[i].weight.data()) EXPECT_LE(std::abs(w), std::sqrt(6.0 / fan) / 30.0);
  const Tensor y = siren_forward(random_tensor({10, 8}, rng, -5, 5), st);
  for (double v : y.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  const SirenStack g = SirenStack::make(8, fan, 3, Activation::Gelu, rng);
  for (double w : g.layers[1].weight.data()) EXPECT_LE(std::abs(w), 1.0 / 4.0);
}

TEST(Siren, DimensionMismatch) {
  Rng rng = substream(6, "t");
  const SirenStack st = SirenStack::make(3, 4, 2, Activation::Sine, rng);
  EXPECT_THROW(siren_forward(Tensor::zeros({2, 5}), st), DimensionError);
}

TEST(TemporalFeatures, HourEndpointsAndMondayAnchor) {
  // 2016-07-04 is a Monday.
  const auto tf = temporal_features(hourly("2016-07-04 00:00:00", 24), Frequency::Hourly);
  ASSERT_EQ(tf.matrix.shape(), (Shape{24, 4}));
  EXPECT_EQ(tf.matrix(0, 3), 0.0);
  EXPECT_EQ(tf.matrix(23, 3), 1.0);
  EXPECT_EQ(tf.matrix(0, 2), 0.0);
}

TEST(TemporalFeatures, MatchesStandaloneCalendarOracle) {
  const auto tf = temporal_features(hourly("2016-07-01 12:00:00", 1), Frequency::Hourly);
  ASSERT_EQ(tf.feature_names.size(), 4u);
  EXPECT_NEAR(tf.matrix(0, 0), (day_of_year(2016, 7, 1) - 1) / 365.0, 1e-15);
  EXPECT_NEAR(tf.matrix(0, 1), 6.0 / 11.0, 1e-15);
  EXPECT_NEAR(tf.matrix(0, 2), weekday_monday0(2016, 7, 1) / 6.0, 1e-15);
  EXPECT_NEAR(tf.matrix(0, 3), 12.0 / 23.0, 1e-15);
}

TEST(TemporalFeatures, RandomDatesAgreeWithOracle) {
  Rng rng = substream(7, "t");
  std::uniform_int_distribution<long> hours(0, 24L * 365 * 30);
  const Timestamp base = *parse_timestamp("1990-01-01 00:00:00");
  for (int i = 0; i < 200; ++i) {
    const Timestamp t = base + std::chrono::hours{hours(rng)};
    const auto f = calendar_fields(t);
    EXPECT_EQ(f.day_of_year, day_of_year(f.year, f.month, f.day)) << format_timestamp(t);
    EXPECT_EQ(f.day_of_week, weekday_monday0(f.year, f.month, f.day)) << format_timestamp(t);
  }
}

TEST(TemporalFeatures, SubHourlyHasMinuteColumn) {
  const auto q = temporal_features(hourly("2016-07-01 00:00:00", 8, 900), Frequency::QuarterHourly);
  ASSERT_EQ(q.feature_names.size(), 5u);
  EXPECT_NEAR(q.matrix(3, 4), 45.0 / 59.0, 1e-15);
  const auto t = temporal_features(hourly("2016-07-01 00:00:00", 6, 600), Frequency::TenMinutely);
  EXPECT_EQ(t.matrix(5, 4), 1.0);
}

TEST(TemporalFeatures, AllEntriesInUnitIntervalIncludingLeapDay) {
  const auto tf = temporal_features(hourly("2016-12-30 00:00:00", 24 * 4), Frequency::Hourly);
  for (double v : tf.matrix.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(TemporalFeatures, NonUniformSpacingIsIngestionError) {
  auto ts = hourly("2016-07-01 00:00:00", 5);
  ts[3] += std::chrono::hours{1};
  EXPECT_THROW(temporal_features(ts, Frequency::Hourly), IngestionError);
}
