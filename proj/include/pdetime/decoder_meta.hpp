#pragma once

// Closed-form ridge decoder fitted per window on the lookback part of z,
// differentiable with respect to both z and the targets so the horizon loss
// reaches the encoder and solver parameters through the fit.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>

#include "pdetime/diffarray.hpp"
#include "pdetime/errors.hpp"
#include "pdetime/model.hpp"
#include "pdetime/window.hpp"

namespace pdetime {

struct RidgeSolution {
  Tensor W;  // [(d+1) x C], last row is the bias
  double lambda = 1.0;
};

/// Z with a trailing ones column.
inline Tensor append_ones(const Tensor& z) { return concat({z, Tensor::full({z.dim(0), 1}, 1.0)}, 1); }

/// W = (Zp^T Zp + lambda I)^-1 Zp^T T via Cholesky. The backward pass solves
/// the adjoint system with the same factor:
///   Gbar = A^-1 G,  dZp = (T - Zp W) Gbar^T - Zp Gbar W^T,  dT = Zp Gbar.
inline Tensor ridge_solve(const Tensor& zp, const Tensor& targets, double lambda) {
  if (zp.rank() != 2 || targets.rank() != 2 || zp.dim(0) != targets.dim(0)) {
    throw DimensionError("ridge_solve: design " + shape_string(zp.shape()) + " and targets " +
                         shape_string(targets.shape()) + " disagree");
  }
  if (!(lambda > 0.0)) throw ContractError("ridge_solve: lambda must be positive");
  for (double v : zp.data())
    if (!std::isfinite(v)) throw NumericError("ridge_solve: non-finite design matrix");
  for (double v : targets.data())
    if (!std::isfinite(v)) throw NumericError("ridge_solve: non-finite targets");

  using detail::ConstMap;
  const std::size_t n = zp.dim(0), p = zp.dim(1), c = targets.dim(1);
  ConstMap Z(zp.data().data(), n, p);
  ConstMap T(targets.data().data(), n, c);
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(p, p) * lambda;
  A.selfadjointView<Eigen::Lower>().rankUpdate(Z.transpose());
  A.triangularView<Eigen::StrictlyUpper>() = A.transpose();
  auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(A);
  if (llt->info() != Eigen::Success) throw NumericError("ridge_solve: Cholesky factorization failed");
  const Eigen::MatrixXd Wm = llt->solve(Z.transpose() * T);

  std::vector<double> w(p * c);
  detail::MutMap(w.data(), p, c) = Wm;
  auto *pz = zp.node(), *pt = targets.node();
  return custom_op({p, c}, std::move(w), {zp, targets}, [=](const detail::Node& out) {
    ConstMap Zb(pz->data.data(), n, p);
    ConstMap Tb(pt->data.data(), n, c);
    ConstMap Wb(out.data.data(), p, c);
    ConstMap G(out.grad.data(), p, c);
    const Eigen::MatrixXd gbar = llt->solve(Eigen::MatrixXd(G));
    if (pz->requires_grad) {
      pz->ensure_grad();
      const Eigen::MatrixXd resid = Tb - Zb * Wb;
      detail::MutMap(pz->grad.data(), n, p).noalias() += resid * gbar.transpose() - Zb * gbar * Wb.transpose();
    }
    if (pt->requires_grad) {
      pt->ensure_grad();
      detail::MutMap(pt->grad.data(), n, c).noalias() += Zb * gbar;
    }
  });
}

/// Fits lookback latents [L x d] to targets [L x C] (deltas from x_init).
inline RidgeSolution ridge_fit(const Tensor& z_lookback, const Tensor& targets, double lambda) {
  if (z_lookback.rank() != 2 || z_lookback.dim(0) == 0) {
    throw DimensionError("ridge_fit: latent lookback must be a non-empty matrix, got " +
                         shape_string(z_lookback.shape()));
  }
  return {ridge_solve(append_ones(z_lookback), targets, lambda), lambda};
}

/// Rows of [z, 1] W + x_init.
inline Tensor decode(const Tensor& z, const RidgeSolution& sol, const Tensor& x_init) {
  return add(matmul(append_ones(z), sol.W), x_init);
}

struct Prediction {
  Tensor y_hat;          // [H x C]
  Tensor deltas;         // horizon deltas before adding x_init [H x C]
  Tensor x_init;         // initial condition actually used [C]
  Tensor z;              // [(L+H) x d]
  SolverOutput solver;   // u / dudt for the continuity term
  RidgeSolution ridge;
};

/// Encoder -> solver -> ridge fit on the lookback -> decode the horizon.
/// `tau0` is the shared time-index embedding (see embed_time).
inline Prediction adapt_and_predict(const ForecastWindow& w, const Model& m, const Tensor& tau0) {
  const auto& c = m.config;
  const std::size_t L = w.lookback(), H = w.horizon();
  if (L != c.encoder.lookback || H != c.encoder.horizon || w.channels() != c.encoder.channels) {
    throw DimensionError("adapt_and_predict: window [L=" + std::to_string(L) + ",H=" + std::to_string(H) +
                         ",C=" + std::to_string(w.channels()) + "] does not match the model configuration");
  }
  Prediction pr;
  pr.x_init = c.use_initial ? w.x_init : Tensor::zeros({w.channels()});
  const Tensor relative = sub(w.X, pr.x_init);
  const LatentSequence latent = encode_from(tau0, w.temporal, relative, m.encoder);
  pr.solver = solve_detailed(latent.alpha, m.solver);
  pr.z = pr.solver.z;
  pr.ridge = ridge_fit(slice(pr.z, 0, 0, L), relative, c.ridge_lambda);
  pr.deltas = matmul(append_ones(slice(pr.z, 0, L, L + H)), pr.ridge.W);
  pr.y_hat = add(pr.deltas, pr.x_init);
  return pr;
}

inline Prediction adapt_and_predict(const ForecastWindow& w, const Model& m) {
  return adapt_and_predict(w, m, embed_time(w.grid, m.encoder));
}

}  // namespace pdetime
