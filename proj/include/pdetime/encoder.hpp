#pragma once

// Encoder producing the latent derivative sequence alpha over all L+H
// positions in one pass. The time-index path (CFF -> GeLU stack) is the
// query; channel tokens (each channel's lookback history) are aggregated by
// cross-attention and calendar features are fused by an affine map.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pdetime/diffarray.hpp"
#include "pdetime/errors.hpp"
#include "pdetime/features.hpp"
#include "pdetime/nn.hpp"
#include "pdetime/rng.hpp"

namespace pdetime {

struct EncoderConfig {
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t channels = 1;
  std::size_t temporal_dim = 4;
  std::size_t d = 64;
  std::size_t k = 5;         // depth of each feature stack
  std::size_t n_layers = 1;  // aggregation blocks
  std::size_t n_heads = 1;
  std::size_t cff_scales = 8;
  bool use_temporal = true;
  bool use_spatial = true;
};

struct AggregationBlock {
  Linear query, key, value, output;
  LayerNorm attn_norm;
  Linear fusion;  // (d + t) -> d
  LayerNorm fusion_norm;

  void collect(ParameterList& out, const std::string& p) const {
    query.collect(out, p + ".query");
    key.collect(out, p + ".key");
    value.collect(out, p + ".value");
    output.collect(out, p + ".output");
    attn_norm.collect(out, p + ".attn_norm");
    fusion.collect(out, p + ".fusion");
    fusion_norm.collect(out, p + ".fusion_norm");
  }
};

struct EncoderParams {
  EncoderConfig config;
  CffBank cff;
  SirenStack time_stack;      // GeLU, CFF width -> d
  SirenStack temporal_stack;  // sine, t -> t
  SirenStack spatial_stack;   // sine, L -> d
  LayerNorm time_norm, temporal_norm, spatial_norm;
  std::vector<AggregationBlock> blocks;

  /// Trainable tensors only (the CFF bank is frozen).
  void collect(ParameterList& out) const {
    time_stack.collect(out, "encoder.time_stack");
    temporal_stack.collect(out, "encoder.temporal_stack");
    spatial_stack.collect(out, "encoder.spatial_stack");
    time_norm.collect(out, "encoder.time_norm");
    temporal_norm.collect(out, "encoder.temporal_norm");
    spatial_norm.collect(out, "encoder.spatial_norm");
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, "encoder.block" + std::to_string(i));
  }
};

inline void validate(const EncoderConfig& c) {
  if (c.lookback == 0 || c.horizon == 0 || c.channels == 0 || c.temporal_dim == 0)
    throw ConfigError("encoder: lookback, horizon, channels and temporal_dim must be >= 1");
  if (c.d < 2 || c.d % 2 != 0) throw ConfigError("encoder: d must be even and >= 2, got " + std::to_string(c.d));
  if (c.k == 0) throw ConfigError("encoder: k must be >= 1");
  if (c.n_layers == 0) throw ConfigError("encoder: n_layers must be >= 1");
  if (c.n_heads == 0 || c.d % c.n_heads != 0)
    throw ConfigError("encoder: n_heads (" + std::to_string(c.n_heads) + ") must divide d (" + std::to_string(c.d) + ")");
  if (c.cff_scales == 0) throw ConfigError("encoder: cff_scales must be >= 1");
}

inline EncoderParams init_encoder(const EncoderConfig& c, Rng& init_rng, Rng& cff_rng) {
  validate(c);
  EncoderParams p;
  p.config = c;
  p.cff = CffBank::sample(c.d / 2, c.cff_scales, cff_rng);
  p.time_stack = SirenStack::make(p.cff.output_dim(), c.d, c.k, Activation::Gelu, init_rng);
  p.temporal_stack = SirenStack::make(c.temporal_dim, c.temporal_dim, c.k, Activation::Sine, init_rng);
  p.spatial_stack = SirenStack::make(c.lookback, c.d, c.k, Activation::Sine, init_rng);
  p.time_norm = LayerNorm::identity(c.d);
  p.temporal_norm = LayerNorm::identity(c.temporal_dim);
  p.spatial_norm = LayerNorm::identity(c.d);
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    AggregationBlock b;
    b.query = Linear::affine(c.d, c.d, init_rng);
    b.key = Linear::affine(c.d, c.d, init_rng);
    b.value = Linear::affine(c.d, c.d, init_rng);
    b.output = Linear::affine(c.d, c.d, init_rng);
    b.attn_norm = LayerNorm::identity(c.d);
    b.fusion = Linear::affine(c.d + c.temporal_dim, c.d, init_rng);
    b.fusion_norm = LayerNorm::identity(c.d);
    p.blocks.push_back(std::move(b));
  }
  return p;
}

struct Embeddings {
  Tensor time;      // [(L+H) x d]
  Tensor temporal;  // [(L+H) x t]
  Tensor spatial;   // [C x d]
};

struct LatentSequence {
  Tensor alpha;  // [(L+H) x d]
};

/// Time-index path only. Identical for every window sharing the grid, so
/// batch code computes it once.
inline Tensor embed_time(const TimeIndexGrid& grid, const EncoderParams& p) {
  return p.time_norm(siren_forward(cff_encode(grid, p.cff), p.time_stack));
}

inline Tensor embed_temporal(const Tensor& t_feats, const EncoderParams& p) {
  return p.temporal_norm(siren_forward(t_feats, p.temporal_stack));
}

/// x_his [L x C] -> channel tokens [C x d].
inline Tensor embed_spatial(const Tensor& x_his, const EncoderParams& p) {
  if (x_his.rank() != 2 || x_his.dim(0) != p.config.lookback || x_his.dim(1) != p.config.channels) {
    throw DimensionError("embed_spatial: expected x_his [" + std::to_string(p.config.lookback) + "x" +
                         std::to_string(p.config.channels) + "], got " + shape_string(x_his.shape()));
  }
  return p.spatial_norm(siren_forward(transpose(x_his), p.spatial_stack));
}

inline Embeddings embed_inputs(const TimeIndexGrid& grid, const Tensor& t_feats, const Tensor& x_his,
                               const EncoderParams& p) {
  return {embed_time(grid, p), embed_temporal(t_feats, p), embed_spatial(x_his, p)};
}

/// Norm(tau + Attn(tau, tokens)); queries from tau, keys/values from tokens.
inline Tensor cross_attention(const Tensor& tau, const Tensor& tokens, const AggregationBlock& block,
                              std::size_t n_heads) {
  const std::size_t d = tau.shape().back();
  if (tokens.rank() != 2 || tokens.dim(1) != d) {
    throw DimensionError("cross_attention: tokens " + shape_string(tokens.shape()) + " incompatible with queries " +
                         shape_string(tau.shape()));
  }
  const Tensor q = block.query(tau);
  const Tensor k = block.key(tokens);
  const Tensor v = block.value(tokens);
  const std::size_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Tensor qh = n_heads == 1 ? q : slice(q, 1, h * dh, (h + 1) * dh);
    const Tensor kh = n_heads == 1 ? k : slice(k, 1, h * dh, (h + 1) * dh);
    const Tensor vh = n_heads == 1 ? v : slice(v, 1, h * dh, (h + 1) * dh);
    const Tensor weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    heads.push_back(matmul(weights, vh));
  }
  const Tensor attended = n_heads == 1 ? heads.front() : concat(heads, 1);
  return block.attn_norm(add(tau, block.output(attended)));
}

inline Tensor aggregate_layer(const Tensor& tau, const Tensor& t0, const Tensor& x0, const AggregationBlock& block,
                              const EncoderConfig& c) {
  Tensor out = tau;
  if (c.use_spatial) out = cross_attention(out, x0, block, c.n_heads);
  if (c.use_temporal) out = block.fusion_norm(add(out, block.fusion(concat({out, t0}, 1))));
  return out;
}

/// Encoder pass given a precomputed time-index embedding.
inline LatentSequence encode_from(const Tensor& tau0, const Tensor& t_feats, const Tensor& x_his,
                                  const EncoderParams& p) {
  const auto& c = p.config;
  if (t_feats.rank() != 2 || t_feats.dim(0) != tau0.dim(0) || t_feats.dim(1) != c.temporal_dim) {
    throw DimensionError("encode: temporal features " + shape_string(t_feats.shape()) + " do not match [" +
                         std::to_string(tau0.dim(0)) + "x" + std::to_string(c.temporal_dim) + "]");
  }
  const Tensor t0 = c.use_temporal ? embed_temporal(t_feats, p) : Tensor();
  const Tensor x0 = c.use_spatial ? embed_spatial(x_his, p) : Tensor();
  Tensor tau = tau0;
  for (const auto& block : p.blocks) tau = aggregate_layer(tau, t0, x0, block, c);
  return {tau};
}

inline LatentSequence encode(const Tensor& x_his, const Tensor& t_feats, const TimeIndexGrid& grid,
                             const EncoderParams& p) {
  return encode_from(embed_time(grid, p), t_feats, x_his, p);
}

}  // namespace pdetime
