#pragma once

// Patched Euler integration of the latent derivative. The sequence is cut
// into non-overlapping patches of length S; inside each patch a direct
// estimate u at the patch's last position anchors a backward cumulative sum
// of the estimated derivative:
//
//   z_j = u_{S-1} - sum_{k=j+1}^{S-1} dudt_k      (positions local to the patch)
//
// An output MLP maps the integrated latent to z.

#include <cstddef>
#include <string>

#include "pdetime/diffarray.hpp"
#include "pdetime/errors.hpp"
#include "pdetime/nn.hpp"
#include "pdetime/rng.hpp"

namespace pdetime {

struct SolverParams {
  Mlp dudt_head;
  Mlp u_head;
  Mlp out_head;
  std::size_t patch = 12;
  bool integrate = true;  // false: z = out_head(u), no patch integration

  void collect(ParameterList& out) const {
    dudt_head.collect(out, "solver.dudt_head");
    u_head.collect(out, "solver.u_head");
    out_head.collect(out, "solver.out_head");
  }
};

inline SolverParams init_solver(std::size_t d, std::size_t patch, Rng& rng) {
  if (patch == 0) throw ConfigError("solver: patch length must be >= 1");
  SolverParams p;
  p.dudt_head = Mlp::make(d, d, d, rng);
  p.u_head = Mlp::make(d, d, d, rng);
  p.out_head = Mlp::make(d, d, d, rng);
  p.patch = patch;
  return p;
}

inline void check_patching(std::size_t total, std::size_t patch) {
  if (patch == 0 || total % patch != 0) {
    throw ConfigError("solver: sequence length " + std::to_string(total) + " is not divisible by patch length " +
                      std::to_string(patch));
  }
}

/// Index of the last position of i's patch.
inline std::size_t patch_anchor(std::size_t i, std::size_t patch, std::size_t total) {
  check_patching(total, patch);
  if (i >= total) throw IndexError("patch_anchor: position " + std::to_string(i) + " >= " + std::to_string(total));
  return (i / patch + 1) * patch - 1;
}

/// Backward cumulative integration inside each patch of u and dudt, both
/// [total x d]. Negate, flip, drop the patch's first derivative, prepend the
/// anchor, prefix-sum, flip back.
inline Tensor integrate_patches(const Tensor& u, const Tensor& dudt, std::size_t patch) {
  if (u.shape() != dudt.shape() || u.rank() != 2) {
    throw DimensionError("integrate_patches: u " + shape_string(u.shape()) + " and dudt " +
                         shape_string(dudt.shape()) + " must be equal rank-2 shapes");
  }
  const std::size_t total = u.dim(0), d = u.dim(1);
  check_patching(total, patch);
  const std::size_t np = total / patch;
  const Tensor u3 = reshape(u, {np, patch, d});
  Tensor g = flip(reshape(neg(dudt), {np, patch, d}), 1);
  g = slice(g, 1, 0, patch - 1);
  const Tensor seq = concat({slice(u3, 1, patch - 1, patch), g}, 1);
  return reshape(flip(cumsum(seq, 1), 1), {total, d});
}

struct SolverOutput {
  Tensor z;     // [total x d], after out_head
  Tensor u;     // direct estimates
  Tensor dudt;  // derivative estimates
};

struct IntegralSequence {
  Tensor z;
};

inline SolverOutput solve_detailed(const Tensor& alpha, const SolverParams& p) {
  const Tensor u = p.u_head(alpha);
  if (!p.integrate) return {p.out_head(u), u, Tensor()};
  check_patching(alpha.dim(0), p.patch);
  const Tensor dudt = p.dudt_head(alpha);
  return {p.out_head(integrate_patches(u, dudt, p.patch)), u, dudt};
}

inline IntegralSequence solve(const Tensor& alpha, const SolverParams& p) { return {solve_detailed(alpha, p).z}; }

/// Mismatch between each patch's direct anchor estimate and the anchor of the
/// previous patch carried forward by the derivative estimates in between:
///   u[a_p]  vs  u[a_{p-1}] + sum_{k=a_{p-1}+1}^{a_p} dudt_k
/// Smooth L1, averaged over boundaries and features. Zero for a single patch.
inline Tensor continuity_residual(const Tensor& u, const Tensor& dudt, std::size_t patch, double beta = 1.0) {
  if (u.shape() != dudt.shape() || u.rank() != 2) {
    throw DimensionError("continuity_residual: u " + shape_string(u.shape()) + " and dudt " +
                         shape_string(dudt.shape()) + " must be equal rank-2 shapes");
  }
  const std::size_t total = u.dim(0), d = u.dim(1);
  check_patching(total, patch);
  const std::size_t np = total / patch;
  if (np < 2) return Tensor::scalar(0.0);
  const Tensor anchors = slice(reshape(u, {np, patch, d}), 1, patch - 1, patch);                 // [np,1,d]
  const Tensor patch_sums = slice(cumsum(reshape(dudt, {np, patch, d}), 1), 1, patch - 1, patch);  // [np,1,d]
  const Tensor direct = slice(anchors, 0, 1, np);
  const Tensor carried = add(slice(anchors, 0, 0, np - 1), slice(patch_sums, 0, 1, np));
  return smooth_l1_mean(direct, carried, beta);
}

}  // namespace pdetime
