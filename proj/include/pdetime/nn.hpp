#pragma once

// Small building blocks shared by the encoder and solver: affine maps,
// affine layer normalization and the named-parameter registry used by the
// optimizer and checkpoint code.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pdetime/diffarray.hpp"
#include "pdetime/rng.hpp"

namespace pdetime {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// y = x W + b, with W stored as [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  /// Uniform(-bound, bound) for both weight and bias.
  static Linear uniform(std::size_t in, std::size_t out, double bound, Rng& rng) {
    Linear l;
    l.weight = uniform_tensor({in, out}, bound, rng);
    l.bias = uniform_tensor({out}, bound, rng);
    return l;
  }
  /// Default affine initialization, +-1/sqrt(fan_in).
  static Linear affine(std::size_t in, std::size_t out, Rng& rng) {
    return uniform(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  }

  Tensor operator()(const Tensor& x) const {
    if (x.shape().back() != in_features()) {
      throw DimensionError("linear layer expects last dim " + std::to_string(in_features()) + ", got input " +
                           shape_string(x.shape()));
    }
    return add(matmul(x, weight), bias);
  }

  void collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

/// Row normalization followed by a learned per-feature gain and offset.
struct LayerNorm {
  Tensor gain;
  Tensor offset;

  static LayerNorm identity(std::size_t width) {
    return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
  }

  Tensor operator()(const Tensor& x) const { return add(mul(layernorm_rows(x), gain), offset); }

  void collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".gain", gain});
    out.push_back({prefix + ".offset", offset});
  }
};

/// affine -> GeLU -> affine
struct Mlp {
  Linear first;
  Linear second;

  static Mlp make(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    Mlp m;
    m.first = Linear::affine(in, hidden, rng);
    m.second = Linear::affine(hidden, out, rng);
    return m;
  }

  Tensor operator()(const Tensor& x) const { return second(gelu(first(x))); }

  void collect(ParameterList& out, const std::string& prefix) const {
    first.collect(out, prefix + ".0");
    second.collect(out, prefix + ".1");
  }
};

}  // namespace pdetime
