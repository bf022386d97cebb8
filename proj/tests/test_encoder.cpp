#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "pdetime/decoder_meta.hpp"
#include "pdetime/encoder.hpp"
#include "pdetime/errors.hpp"
#include "pdetime/losses.hpp"
#include "pdetime/model.hpp"
#include "pdetime/oracles.hpp"
#include "pdetime/selftest.hpp"
#include "test_util.hpp"

using namespace pdetime;
using testutil::max_abs;
using testutil::random_tensor;

namespace {

EncoderConfig small_config(std::size_t L, std::size_t H, std::size_t C, std::size_t d) {
  EncoderConfig c;
  c.lookback = L;
  c.horizon = H;
  c.channels = C;
  c.d = d;
  return c;
}

EncoderParams make_encoder(const EncoderConfig& c, std::uint64_t seed = 2024) {
  Rng a = substream(seed, "init"), b = substream(seed, "cff");
  return init_encoder(c, a, b);
}

// The 1e-12 epsilon lowers the variance by eps/var, about 1e-10 for these rows.
void expect_unit_rows(const Tensor& x, double tol = 1e-8) {
  const std::size_t n = x.dim(0), w = x.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0, v = 0.0;
    for (std::size_t j = 0; j < w; ++j) m += x(i, j);
    m /= static_cast<double>(w);
    for (std::size_t j = 0; j < w; ++j) v += (x(i, j) - m) * (x(i, j) - m);
    v /= static_cast<double>(w);
    EXPECT_LE(std::abs(m), tol);
    EXPECT_LE(std::abs(v - 1.0), tol);
  }
}

// Plain-loop y = x W + b.
std::vector<double> affine_oracle(const Tensor& x, const Linear& l) {
  const std::size_t n = x.dim(0), in = l.in_features(), out = l.out_features();
  std::vector<double> y(n * out);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < out; ++j) {
      double s = l.bias(j);
      for (std::size_t i = 0; i < in; ++i) s += x(r, i) * l.weight(i, j);
      y[r * out + j] = s;
    }
  return y;
}

std::vector<double> row_norm_oracle(const std::vector<double>& x, std::size_t w) {
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < x.size() / w; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t j = 0; j < w; ++j) m += x[r * w + j];
    m /= static_cast<double>(w);
    for (std::size_t j = 0; j < w; ++j) v += (x[r * w + j] - m) * (x[r * w + j] - m);
    v /= static_cast<double>(w);
    for (std::size_t j = 0; j < w; ++j) y[r * w + j] = (x[r * w + j] - m) / std::sqrt(v + 1e-12);
  }
  return y;
}

// softmax(Q K^T / sqrt(d)) V followed by the output map, residual and norm.
std::vector<double> attention_oracle(const Tensor& tau, const Tensor& tokens, const AggregationBlock& b) {
  const std::size_t n = tau.dim(0), C = tokens.dim(0), d = tau.dim(1);
  const auto q = affine_oracle(tau, b.query), k = affine_oracle(tokens, b.key), v = affine_oracle(tokens, b.value);
  std::vector<double> att(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(C);
    double mx = -1e300;
    for (std::size_t c = 0; c < C; ++c) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += q[i * d + j] * k[c * d + j];
      s[c] = dot / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, s[c]);
    }
    double z = 0.0;
    for (auto& e : s) z += (e = std::exp(e - mx));
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t j = 0; j < d; ++j) att[i * d + j] += s[c] / z * v[c * d + j];
  }
  const auto o = affine_oracle(Tensor::from({n, d}, att), b.output);
  std::vector<double> pre(n * d);
  for (std::size_t i = 0; i < n * d; ++i) pre[i] = tau.data()[i] + o[i];
  return row_norm_oracle(pre, d);
}

}  // namespace

TEST(EmbedInputs, ShapesForReferenceConfiguration) {
  const auto c = small_config(96, 96, 7, 64);
  const auto p = make_encoder(c);
  Rng rng = substream(1, "t");
  const auto e = embed_inputs(time_index_grid(96, 96), random_tensor({192, 4}, rng, 0, 1), random_tensor({96, 7}, rng), p);
  EXPECT_EQ(e.time.shape(), (Shape{192, 64}));
  EXPECT_EQ(e.temporal.shape(), (Shape{192, 4}));
  EXPECT_EQ(e.spatial.shape(), (Shape{7, 64}));
}

TEST(EmbedInputs, ZeroHistoryGivesIdenticalTokens) {
  const auto c = small_config(12, 12, 3, 8);
  const auto p = make_encoder(c);
  const Tensor x0 = embed_spatial(Tensor::zeros({12, 3}), p);
  for (std::size_t r = 1; r < 3; ++r)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(x0(r, j), x0(0, j));
}

TEST(EmbedInputs, NormalizedRows) {
  const auto c = small_config(24, 12, 3, 16);
  const auto p = make_encoder(c);
  Rng rng = substream(2, "t");
  const auto e = embed_inputs(time_index_grid(24, 12), random_tensor({36, 4}, rng, 0, 1), random_tensor({24, 3}, rng), p);
  expect_unit_rows(e.time);
  expect_unit_rows(e.spatial);
  expect_unit_rows(e.temporal);
}

TEST(EmbedInputs, ChannelMismatchIsShapeError) {
  const auto p = make_encoder(small_config(12, 12, 3, 8));
  EXPECT_THROW(embed_spatial(Tensor::zeros({12, 4}), p), DimensionError);
  EXPECT_THROW(embed_spatial(Tensor::zeros({11, 3}), p), DimensionError);
}

TEST(CrossAttention, SingleTokenBroadcastsValue) {
  const auto p = make_encoder(small_config(4, 4, 1, 4));
  Rng rng = substream(3, "t");
  const Tensor tau = random_tensor({8, 4}, rng), tok = random_tensor({1, 4}, rng);
  const auto& b = p.blocks[0];
  const auto v = affine_oracle(tok, b.value);
  const auto o = affine_oracle(Tensor::from({1, 4}, v), b.output);
  std::vector<double> pre(32);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 4; ++j) pre[i * 4 + j] = tau(i, j) + o[j];
  EXPECT_LE(max_abs(cross_attention(tau, tok, b, 1).to_vector(), row_norm_oracle(pre, 4)), 1e-12);
}

TEST(CrossAttention, UniformKeysAverageValues) {
  const auto p = make_encoder(small_config(4, 4, 3, 4));
  Rng rng = substream(4, "t");
  const Tensor tau = random_tensor({8, 4}, rng), one = random_tensor({1, 4}, rng);
  const Tensor three = concat({one, one, one}, 0);
  EXPECT_LE(max_abs(cross_attention(tau, three, p.blocks[0], 1).to_vector(),
                    cross_attention(tau, one, p.blocks[0], 1).to_vector()),
            1e-14);
}

TEST(CrossAttention, MatchesExplicitOracle) {
  const auto p = make_encoder(small_config(2, 2, 2, 4));
  Rng rng = substream(5, "t");
  const Tensor tau = random_tensor({4, 4}, rng), tok = random_tensor({2, 4}, rng, -2, 2);
  EXPECT_LE(max_abs(cross_attention(tau, tok, p.blocks[0], 1).to_vector(), attention_oracle(tau, tok, p.blocks[0])),
            1e-10);
}

TEST(AggregateLayer, ZeroFusionIsNormOfAttention) {
  auto p = make_encoder(small_config(4, 4, 2, 4));
  auto& b = p.blocks[0];
  b.fusion.weight = Tensor::zeros(b.fusion.weight.shape());
  b.fusion.bias = Tensor::zeros(b.fusion.bias.shape());
  Rng rng = substream(6, "t");
  const Tensor tau = random_tensor({8, 4}, rng), t0 = random_tensor({8, 4}, rng), x0 = random_tensor({2, 4}, rng);
  const Tensor attended = cross_attention(tau, x0, b, 1);
  EXPECT_LE(max_abs(aggregate_layer(tau, t0, x0, b, p.config).to_vector(), layernorm_rows(attended).to_vector()),
            1e-12);
}

TEST(AggregateLayer, MatchesStepByStepOracle) {
  const auto p = make_encoder(small_config(4, 4, 2, 4));
  const auto& b = p.blocks[0];
  Rng rng = substream(7, "t");
  const Tensor tau = random_tensor({8, 4}, rng), t0 = random_tensor({8, 4}, rng), x0 = random_tensor({2, 4}, rng);
  const auto a = attention_oracle(tau, x0, b);
  std::vector<double> cat(8 * 8);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      cat[i * 8 + j] = a[i * 4 + j];
      cat[i * 8 + 4 + j] = t0(i, j);
    }
  const auto f = affine_oracle(Tensor::from({8, 8}, cat), b.fusion);
  std::vector<double> pre(32);
  for (std::size_t i = 0; i < 32; ++i) pre[i] = a[i] + f[i];
  EXPECT_LE(max_abs(aggregate_layer(tau, t0, x0, b, p.config).to_vector(), row_norm_oracle(pre, 4)), 1e-10);
}

TEST(AggregateLayer, FusionWidthMismatch) {
  auto p = make_encoder(small_config(4, 4, 2, 4));
  Rng rng = substream(8, "t");
  const Tensor tau = random_tensor({8, 4}, rng), t0 = random_tensor({8, 5}, rng), x0 = random_tensor({2, 4}, rng);
  EXPECT_THROW(aggregate_layer(tau, t0, x0, p.blocks[0], p.config), DimensionError);
}

TEST(Encode, ShapeFixedAcrossDepthAndLayers) {
  Rng rng = substream(9, "t");
  const Tensor x = random_tensor({12, 2}, rng), t = random_tensor({24, 4}, rng, 0, 1);
  for (std::size_t N : {1, 2, 3})
    for (std::size_t k : {1, 3, 5}) {
      auto c = small_config(12, 12, 2, 8);
      c.n_layers = N;
      c.k = k;
      const auto p = make_encoder(c);
      EXPECT_EQ(encode(x, t, time_index_grid(12, 12), p).alpha.shape(), (Shape{24, 8}));
    }
}

TEST(Encode, DeterministicAndBoundedAtInit) {
  const auto c = small_config(48, 48, 3, 32);
  const auto p = make_encoder(c);
  Rng rng = substream(10, "t");
  const Tensor x = random_tensor({48, 3}, rng, -3, 3), t = random_tensor({96, 4}, rng, 0, 1);
  const auto a = encode(x, t, time_index_grid(48, 48), p).alpha.to_vector();
  EXPECT_EQ(a, encode(x, t, time_index_grid(48, 48), p).alpha.to_vector());
  for (double v : a) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_LT(std::abs(v), 1e3);
  }
}

TEST(Encode, IndependentOfHorizonTargets) {
  const Model m = init_model(gradient_toy_config(), 2024);
  Rng rng = substream(11, "t");
  ForecastWindow w = random_window(8, 4, 2, 4, rng);
  ForecastWindow w2 = w;
  w2.Y = random_tensor({4, 2}, rng, -5, 5);
  NoGradGuard g;
  EXPECT_EQ(adapt_and_predict(w, m).z.to_vector(), adapt_and_predict(w2, m).z.to_vector());
}

TEST(Encode, GradientMatchesFiniteDifferences) {
  auto c = small_config(8, 4, 2, 4);
  const auto p = make_encoder(c);
  Rng rng = substream(12, "t");
  const Tensor x = random_tensor({8, 2}, rng), t = random_tensor({12, 4}, rng, 0, 1), w = random_tensor({12, 4}, rng);
  ParameterList params;
  p.collect(params);
  const auto checks = oracle::finite_difference_check(
      params, [&] { return sum(mul(encode(x, t, time_index_grid(8, 4), p).alpha, w)); });
  for (const auto& ch : checks) EXPECT_LE(ch.rel_error, 1e-5) << ch.name;
}

TEST(Encode, EveryParameterGroupReceivesGradient) {
  const Model m = init_model(gradient_toy_config(), 2024);
  Rng rng = substream(13, "t");
  const ForecastWindow w = random_window(8, 4, 2, 4, rng);
  const auto params = m.parameters();
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.mutable_grad();
    t.zero_grad();
  }
  backward(window_losses(adapt_and_predict(w, m), w, 4).total);
  // A group is one affine map or norm; the key bias alone is softmax-invariant.
  std::map<std::string, double> group;
  for (const auto& p : params) {
    const std::string g = p.name.substr(0, p.name.rfind('.'));
    for (double v : p.tensor.grad()) group[g] += std::abs(v);
  }
  for (const auto& [name, mass] : group) EXPECT_GT(mass, 0.0) << name;
}

TEST(EncoderConfig, HeadsMustDivideWidth) {
  auto c = small_config(8, 4, 2, 6);
  c.n_heads = 4;
  EXPECT_THROW(make_encoder(c), ConfigError);
  c.n_heads = 3;
  const auto p = make_encoder(c);
  Rng rng = substream(14, "t");
  EXPECT_EQ(encode(random_tensor({8, 2}, rng), random_tensor({12, 4}, rng, 0, 1), time_index_grid(8, 4), p).alpha.shape(),
            (Shape{12, 6}));
}
