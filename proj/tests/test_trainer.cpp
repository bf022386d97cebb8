#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "pdetime/data.hpp"
#include "pdetime/selftest.hpp"
#include "pdetime/synthetic.hpp"
#include "pdetime/trainer.hpp"
#include "test_util.hpp"

using namespace pdetime;

namespace {

Tensor param(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from({n}, std::move(v), true);
}

void set_grad(Tensor& t, const std::vector<double>& g) {
  auto dst = t.mutable_grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] = g[i];
}

ModelConfig small_config() {
  ModelConfig c = gradient_toy_config();
  c.encoder.lookback = 12;
  c.encoder.horizon = 6;
  c.encoder.channels = 2;
  c.encoder.d = 8;
  c.patch = 6;
  return c;
}

struct SmallData {
  std::vector<ForecastWindow> train, val;
};

SmallData small_data() {
  const auto ds = make_sinusoid_dataset({160, 2, 0.01, 1});
  const auto s = chronological_split(ds.length(), {});
  return {make_windows(ds, s.train, 12, 6, 4), make_windows(ds, s.val, 12, 6, 4)};
}

}  // namespace

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  Tensor p = param({1.0, -2.0});
  set_grad(p, {0.0, 0.0});
  AdamState st;
  for (int i = 0; i < 3; ++i) adam_step({{"p", p}}, st, {});
  EXPECT_EQ(p.to_vector(), (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, ConstantGradientMatchesClosedFormRecurrence) {
  Tensor p = param({0.5});
  AdamState st;
  const AdamHyper h{0.01};
  const double g = 0.3;
  double w = 0.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 20; ++t) {
    set_grad(p, {g});
    adam_step({{"p", p}}, st, h);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p(0), w, 1e-12) << "step " << t;
  }
  // With a constant gradient each bias-corrected step is lr * g/(|g| + eps).
  EXPECT_NEAR(p(0), 0.5 - 20 * 0.01 * g / (g + 1e-8), 1e-12);
}

TEST(Adam, DescendsAQuadratic) {
  Tensor p = param({3.0, -4.0});
  AdamState st;
  const AdamHyper h{0.1};
  for (int i = 0; i < 300; ++i) {
    set_grad(p, {2.0 * p(0), 2.0 * p(1)});
    adam_step({{"p", p}}, st, h);
  }
  EXPECT_LT(std::abs(p(0)) + std::abs(p(1)), 0.05);
}

TEST(Adam, MissingGradientIsContractError) {
  Tensor p = param({1.0});
  AdamState st;
  EXPECT_THROW(adam_step({{"p", p}}, st, {}), ContractError);
}

TEST(ClipGradNorm, RescalesOnlyAboveThreshold) {
  Tensor a = param({0, 0}), b = param({0});
  set_grad(a, {3.0, 0.0});
  set_grad(b, {4.0});
  const ParameterList ps = {{"a", a}, {"b", b}};
  EXPECT_FALSE(clip_grad_norm(ps, 5.0));
  EXPECT_TRUE(clip_grad_norm(ps, 1.0));
  EXPECT_NEAR(global_grad_norm(ps), 1.0, 1e-15);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-15);
}

TEST(Train, ZeroEpochsReturnsInitialParameters) {
  const Model m = init_model(small_config(), 4);
  const auto d = small_data();
  TrainConfig tc;
  tc.epochs = 0;
  const TrainResult r = train(m, tc, d.train, d.val);
  const auto a = m.state(), b = r.checkpoint.model.state();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].tensor.to_vector(), b[i].tensor.to_vector());
}

TEST(Train, DeterministicAndImproving) {
  const auto d = small_data();
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  auto run = [&] { return train(init_model(small_config(), 4), tc, d.train, d.val); };
  const TrainResult a = run(), b = run();
  ASSERT_EQ(a.checkpoint.history.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.checkpoint.history[i].train_loss, b.checkpoint.history[i].train_loss);
    EXPECT_EQ(a.checkpoint.history[i].val_lp, b.checkpoint.history[i].val_lp);
  }
  const Model init = init_model(small_config(), 4);
  EXPECT_LT(mean_prediction_loss(a.checkpoint.model, d.val, 1.0), mean_prediction_loss(init, d.val, 1.0));
}

TEST(Train, RestoresBestValidationParameters) {
  const auto d = small_data();
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 8;
  tc.lr = 0.05;
  const TrainResult r = train(init_model(small_config(), 6), tc, d.train, d.val);
  double best = INFINITY;
  for (const auto& h : r.checkpoint.history) best = std::min(best, h.val_lp);
  EXPECT_NEAR(mean_prediction_loss(r.checkpoint.model, d.val, 1.0), best, 1e-12);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto d = small_data();
  Checkpoint ck;
  ck.model = init_model(small_config(), 11);
  ck.config_snapshot = "[train]\nseed = 11\n";
  ck.history = {{0, 1.25, 0.5}, {1, 1.0, 0.25}};
  std::stringstream buf;
  save_checkpoint(ck, buf);
  const Checkpoint back = load_checkpoint(buf);
  EXPECT_EQ(back.config_snapshot, ck.config_snapshot);
  ASSERT_EQ(back.history.size(), 2u);
  EXPECT_EQ(back.history[1].val_lp, 0.25);
  const auto a = ck.model.state(), b = back.model.state();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].tensor.to_vector(), b[i].tensor.to_vector());
  }
  const Metrics ma = evaluate(ck.model, d.val), mb = evaluate(back.model, d.val);
  EXPECT_EQ(ma.mse, mb.mse);
  EXPECT_EQ(ma.mae, mb.mae);
}

TEST(Checkpoint, BadMagicIsIngestionError) {
  std::stringstream buf("NOTACHECKPOINT");
  EXPECT_THROW(load_checkpoint(buf), IngestionError);
  std::stringstream truncated(std::string("PDETIME1\x01\x00", 10));
  EXPECT_THROW(load_checkpoint(truncated), IngestionError);
}

TEST(Metrics, HandValues) {
  MetricAccumulator exact;
  exact.add(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}, 1);
  EXPECT_EQ(exact.result().mse, 0.0);
  EXPECT_EQ(exact.result().mae, 0.0);
  MetricAccumulator off;
  off.add(std::vector<double>{1, 1}, std::vector<double>{0, 0}, 2);
  EXPECT_EQ(off.result().mse, 1.0);
  EXPECT_EQ(off.result().mae, 1.0);
  MetricAccumulator scaled({2.0, 3.0});
  scaled.add(std::vector<double>{1, 1}, std::vector<double>{0, 0}, 2);
  EXPECT_EQ(scaled.result().mse, 6.5);
  EXPECT_EQ(scaled.result().mae, 2.5);
}

TEST(Baselines, PersistenceExactOnConstantAndLinearBeatsIt) {
  auto ds = make_sinusoid_dataset({300, 2, 0.0, 1});
  const auto s = chronological_split(ds.length(), {});
  const auto tr = make_windows(ds, s.train, 24, 12, 2), te = make_windows(ds, s.test, 24, 12, 2);
  const LinearLookbackBaseline lin(tr, 1e-3);
  EXPECT_LT(lin.evaluate(te).mse, persistence_metrics(te).mse);
  for (auto& v : ds.values) v = 1.75;
  EXPECT_EQ(persistence_metrics(make_windows(ds, s.test, 24, 12)).mse, 0.0);
}
