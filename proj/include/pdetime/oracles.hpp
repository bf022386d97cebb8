#pragma once

// Slow, independent reference implementations used by the test suites and
// the `selftest` command. None of these share code paths with the model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "pdetime/diffarray.hpp"
#include "pdetime/errors.hpp"
#include "pdetime/nn.hpp"

namespace pdetime::oracle {

/// Row-major dense matrix.
struct Dense {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Dense() = default;
  Dense(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

/// z_j = u_a - sum_{k=j+1}^{a} dudt_k with a the last index of j's patch.
inline Dense patched_integral(const Dense& u, const Dense& dudt, std::size_t patch) {
  Dense z(u.rows, u.cols);
  for (std::size_t j = 0; j < u.rows; ++j) {
    const std::size_t a = (j / patch + 1) * patch - 1;
    for (std::size_t c = 0; c < u.cols; ++c) {
      double s = u(a, c);
      for (std::size_t k = j + 1; k <= a; ++k) s -= dudt(k, c);
      z(j, c) = s;
    }
  }
  return z;
}

/// Solves A X = B by Gaussian elimination with partial pivoting.
inline Dense gauss_solve(Dense A, Dense B) {
  const std::size_t n = A.rows;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(A(r, col)) > std::abs(A(piv, col))) piv = r;
    if (A(piv, col) == 0.0) throw NumericError("oracle: singular system");
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(A(col, j), A(piv, j));
      for (std::size_t j = 0; j < B.cols; ++j) std::swap(B(col, j), B(piv, j));
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = A(r, col) / A(col, col);
      for (std::size_t j = col; j < n; ++j) A(r, j) -= f * A(col, j);
      for (std::size_t j = 0; j < B.cols; ++j) B(r, j) -= f * B(col, j);
    }
  }
  Dense X(n, B.cols);
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t j = 0; j < B.cols; ++j) {
      double s = B(ii, j);
      for (std::size_t k = ii + 1; k < n; ++k) s -= A(ii, k) * X(k, j);
      X(ii, j) = s / A(ii, ii);
    }
  }
  return X;
}

inline Dense with_ones(const Dense& z) {
  Dense out(z.rows, z.cols + 1);
  for (std::size_t i = 0; i < z.rows; ++i) {
    for (std::size_t j = 0; j < z.cols; ++j) out(i, j) = z(i, j);
    out(i, z.cols) = 1.0;
  }
  return out;
}

/// (Z+^T Z+ + lambda I) W = Z+^T T, built with plain loops.
inline Dense ridge_normal_equations(const Dense& z, const Dense& targets, double lambda) {
  const Dense zp = with_ones(z);
  const std::size_t p = zp.cols;
  Dense A(p, p), B(p, targets.cols);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < zp.rows; ++r) s += zp(r, i) * zp(r, j);
      A(i, j) = s + (i == j ? lambda : 0.0);
    }
    for (std::size_t j = 0; j < targets.cols; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < zp.rows; ++r) s += zp(r, i) * targets(r, j);
      B(i, j) = s;
    }
  }
  return gauss_solve(A, B);
}

/// Max-norm of d/dW (||Z+ W - T||^2 + lambda ||W||^2).
inline double ridge_objective_gradient_maxnorm(const Dense& z, const Dense& targets, const Dense& W, double lambda) {
  const Dense zp = with_ones(z);
  Dense resid(zp.rows, targets.cols);
  for (std::size_t r = 0; r < zp.rows; ++r)
    for (std::size_t c = 0; c < targets.cols; ++c) {
      double s = -targets(r, c);
      for (std::size_t k = 0; k < zp.cols; ++k) s += zp(r, k) * W(k, c);
      resid(r, c) = s;
    }
  double m = 0.0;
  for (std::size_t k = 0; k < zp.cols; ++k)
    for (std::size_t c = 0; c < targets.cols; ++c) {
      double g = 2.0 * lambda * W(k, c);
      for (std::size_t r = 0; r < zp.rows; ++r) g += 2.0 * zp(r, k) * resid(r, c);
      m = std::max(m, std::abs(g));
    }
  return m;
}

inline Dense to_dense(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("oracle: expected a matrix, got " + shape_string(t.shape()));
  Dense d(t.dim(0), t.dim(1));
  const auto s = t.data();
  std::copy(s.begin(), s.end(), d.v.begin());
  return d;
}

inline Tensor to_tensor(const Dense& d) { return Tensor::from({d.rows, d.cols}, d.v); }

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct GradientCheck {
  std::string name;
  double rel_error = 0.0;   // ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8)
  double analytic_norm = 0.0;
};

/// Central differences of `loss` with respect to every element of every
/// tensor in `params`, compared against the gradient `backward` produces.
/// `five_point` switches to the fourth-order stencil, which allows a larger
/// step when gradients are small relative to the loss.
inline std::vector<GradientCheck> finite_difference_check(const ParameterList& params,
                                                          const std::function<Tensor()>& loss, double h = 1e-5,
                                                          bool five_point = false) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.mutable_grad();
    t.zero_grad();
  }
  backward(loss());
  std::vector<GradientCheck> out;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<double> numeric(analytic.size());
    {
      NoGradGuard no_grad;
      for (std::size_t i = 0; i < analytic.size(); ++i) {
        double& x = t.mutable_data()[i];
        const double x0 = x;
        auto at = [&](double v) {
          x = v;
          return loss().item();
        };
        const double d1 = at(x0 + h) - at(x0 - h);
        if (five_point) {
          const double d2 = at(x0 + 2.0 * h) - at(x0 - 2.0 * h);
          numeric[i] = (8.0 * d1 - d2) / (12.0 * h);
        } else {
          numeric[i] = d1 / (2.0 * h);
        }
        x = x0;
      }
    }
    double dn = 0.0, an = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      dn += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      an += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    an = std::sqrt(an);
    nn = std::sqrt(nn);
    out.push_back({p.name, std::sqrt(dn) / std::max({an, nn, 1e-8}), an});
  }
  return out;
}

}  // namespace pdetime::oracle
