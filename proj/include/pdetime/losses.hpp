#pragma once

#include <string>

#include "pdetime/decoder_meta.hpp"
#include "pdetime/diffarray.hpp"
#include "pdetime/errors.hpp"
#include "pdetime/solver.hpp"
#include "pdetime/window.hpp"

namespace pdetime {

inline Tensor smooth_l1(const Tensor& pred, const Tensor& target, double beta = 1.0) {
  return smooth_l1_mean(pred, target, beta);
}

/// Smooth L1 between decoded deltas and Y - x_init.
inline Tensor prediction_loss(const Tensor& decoded_deltas, const Tensor& Y, const Tensor& x_init,
                              double beta = 1.0) {
  return smooth_l1(decoded_deltas, sub(Y, x_init), beta);
}

/// Smooth L1 between successive differences of two sequences [n x C], n >= 2.
/// Callers include the predecessor row of the first horizon step.
inline Tensor first_difference_loss(const Tensor& pred_full, const Tensor& target_full, double beta = 1.0) {
  if (pred_full.rank() != 2 || pred_full.dim(0) < 2) {
    throw ContractError("first_difference_loss: sequences need at least 2 rows, got " +
                        shape_string(pred_full.shape()));
  }
  if (pred_full.shape() != target_full.shape()) {
    throw DimensionError("first_difference_loss: shapes " + shape_string(pred_full.shape()) + " and " +
                         shape_string(target_full.shape()) + " differ");
  }
  const std::size_t n = pred_full.dim(0);
  const Tensor dp = sub(slice(pred_full, 0, 1, n), slice(pred_full, 0, 0, n - 1));
  const Tensor dt = sub(slice(target_full, 0, 1, n), slice(target_full, 0, 0, n - 1));
  return smooth_l1(dp, dt, beta);
}

struct LossReport {
  double l_p = 0.0;
  double l_f = 0.0;
  double l_c = 0.0;
  double total = 0.0;
};

struct LossTerms {
  Tensor l_p, l_f, l_c, total;

  LossReport report() const { return {l_p.item(), l_f.item(), l_c.item(), total.item()}; }
};

/// L = L_p + L_c + L_f for one window. The first horizon difference uses
/// x_init as predecessor on both sides.
inline LossTerms window_losses(const Prediction& pr, const ForecastWindow& w, std::size_t patch,
                               double beta = 1.0) {
  LossTerms t;
  t.l_p = prediction_loss(pr.deltas, w.Y, pr.x_init, beta);
  const Tensor anchor = reshape(pr.x_init, {1, w.channels()});
  t.l_f = first_difference_loss(concat({anchor, pr.y_hat}, 0), concat({anchor, w.Y}, 0), beta);
  t.l_c = pr.solver.dudt.defined() ? continuity_residual(pr.solver.u, pr.solver.dudt, patch, beta)
                                   : Tensor::scalar(0.0);
  t.total = add(add(t.l_p, t.l_c), t.l_f);
  return t;
}

}  // namespace pdetime
