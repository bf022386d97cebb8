#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "pdetime/encoder.hpp"
#include "pdetime/nn.hpp"
#include "pdetime/rng.hpp"
#include "pdetime/solver.hpp"

namespace pdetime {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t patch = 12;
  double ridge_lambda = 1.0;
  bool use_initial = true;  // false: x_init := 0
  bool use_solver = true;   // false: z = out_head(u), no integration

  std::size_t total_length() const { return encoder.lookback + encoder.horizon; }
};

inline void validate(const ModelConfig& c) {
  validate(c.encoder);
  if (c.use_solver) check_patching(c.total_length(), c.patch);
  if (!(c.ridge_lambda > 0.0)) throw ConfigError("model: ridge lambda must be positive");
}

struct Model {
  ModelConfig config;
  EncoderParams encoder;
  SolverParams solver;

  /// Trainable parameters, in a fixed order.
  ParameterList parameters() const {
    ParameterList out;
    encoder.collect(out);
    solver.collect(out);
    return out;
  }

  /// Everything needed to reproduce the forward pass, including frozen tensors.
  ParameterList state() const {
    ParameterList out = parameters();
    encoder.cff.collect(out, "encoder.cff");
    return out;
  }
};

/// Weights come from the "init" substream and CFF frequencies from "cff",
/// so configurations with equal shapes start from identical parameters.
inline Model init_model(const ModelConfig& c, std::uint64_t seed) {
  validate(c);
  Rng init_rng = substream(seed, "init");
  Rng cff_rng = substream(seed, "cff");
  Model m;
  m.config = c;
  m.encoder = init_encoder(c.encoder, init_rng, cff_rng);
  m.solver = init_solver(c.encoder.d, c.patch, init_rng);
  m.solver.integrate = c.use_solver;
  return m;
}

/// Deep copy: a model with the same configuration and its own tensors.
inline Model clone(const Model& m) {
  Model out = init_model(m.config, 0);
  const auto src = m.state();
  auto dst = out.state();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto s = src[i].tensor.data();
    std::copy(s.begin(), s.end(), dst[i].tensor.mutable_data().begin());
  }
  return out;
}

}  // namespace pdetime
