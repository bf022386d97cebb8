#pragma once

// Oracle suites shared by the `selftest` command and the acceptance binary.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "pdetime/decoder_meta.hpp"
#include "pdetime/features.hpp"
#include "pdetime/losses.hpp"
#include "pdetime/model.hpp"
#include "pdetime/oracles.hpp"
#include "pdetime/rng.hpp"
#include "pdetime/solver.hpp"
#include "pdetime/window.hpp"

namespace pdetime {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

inline Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(r * c);
  for (auto& x : v) x = u(rng);
  return Tensor::from({r, c}, std::move(v));
}

template <class F>
SuiteResult timed(const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult r = body();
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

}  // namespace detail

/// Toy window with random lookback, horizon and calendar features.
inline ForecastWindow random_window(std::size_t L, std::size_t H, std::size_t C, std::size_t t, Rng& rng) {
  ForecastWindow w;
  w.X = detail::random_matrix(L, C, rng);
  w.Y = detail::random_matrix(H, C, rng);
  w.x_init = reshape(slice(w.X, 0, L - 1, L), {C});
  w.temporal = detail::random_matrix(L + H, t, rng, 0.0, 1.0);
  w.grid = time_index_grid(L, H);
  return w;
}

/// Constant series X = Y = c row-wise.
inline ForecastWindow constant_window(std::size_t L, std::size_t H, const std::vector<double>& c, std::size_t t,
                                      Rng& rng) {
  const std::size_t C = c.size();
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < L; ++i) xs.insert(xs.end(), c.begin(), c.end());
  for (std::size_t i = 0; i < H; ++i) ys.insert(ys.end(), c.begin(), c.end());
  ForecastWindow w;
  w.X = Tensor::from({L, C}, xs);
  w.Y = Tensor::from({H, C}, ys);
  w.x_init = Tensor::from({C}, c);
  w.temporal = detail::random_matrix(L + H, t, rng, 0.0, 1.0);
  w.grid = time_index_grid(L, H);
  return w;
}

/// Patched integration against the explicit per-position loop over
/// S x (L+H) x d, 20 draws each.
inline SuiteResult solver_oracle_suite(std::uint64_t seed = 2024, double tol = 1e-12) {
  return detail::timed("solver", [&] {
    Rng rng = substream(seed, "selftest.solver");
    double worst = 0.0;
    std::size_t cases = 0;
    for (std::size_t S : {1, 2, 4, 6, 12})
      for (std::size_t total : {12, 24, 48})
        for (std::size_t d : {1, 4, 16})
          for (int draw = 0; draw < 20; ++draw) {
            const Tensor u = detail::random_matrix(total, d, rng);
            const Tensor dudt = detail::random_matrix(total, d, rng);
            const Tensor z = integrate_patches(u, dudt, S);
            const auto ref = oracle::patched_integral(oracle::to_dense(u), oracle::to_dense(dudt), S);
            worst = std::max(worst, oracle::max_abs_diff(z.to_vector(), ref.v));
            ++cases;
          }
    SuiteResult r;
    r.passed = worst <= tol;
    r.detail = std::to_string(cases) + " cases, max |diff| " + detail::fmt("%.3g", worst);
    return r;
  });
}

/// Closed-form ridge against the loop-built normal equations, plus
/// stationarity of the ridge objective at the returned weights.
inline SuiteResult ridge_oracle_suite(std::uint64_t seed = 2024, double tol = 1e-8) {
  return detail::timed("ridge", [&] {
    Rng rng = substream(seed, "selftest.ridge");
    std::uniform_int_distribution<std::size_t> rows(2, 40), feats(1, 12), chans(1, 4);
    std::uniform_real_distribution<double> lam(0.05, 10.0);
    double worst_w = 0.0, worst_g = 0.0;
    for (int i = 0; i < 50; ++i) {
      const std::size_t n = rows(rng), p = feats(rng), c = chans(rng);
      const double lambda = lam(rng);
      const Tensor z = detail::random_matrix(n, p, rng);
      const Tensor tgt = detail::random_matrix(n, c, rng, -2.0, 2.0);
      const RidgeSolution sol = ridge_fit(z, tgt, lambda);
      const auto zd = oracle::to_dense(z), td = oracle::to_dense(tgt);
      const auto ref = oracle::ridge_normal_equations(zd, td, lambda);
      worst_w = std::max(worst_w, oracle::max_abs_diff(sol.W.to_vector(), ref.v));
      worst_g = std::max(worst_g, oracle::ridge_objective_gradient_maxnorm(zd, td, oracle::to_dense(sol.W), lambda));
    }
    SuiteResult r;
    r.passed = worst_w <= tol && worst_g <= tol;
    r.detail = "50 instances, max |W - W_ref| " + detail::fmt("%.3g", worst_w) + ", max |grad| " +
               detail::fmt("%.3g", worst_g);
    return r;
  });
}

/// Configuration of the end-to-end gradient toy.
inline ModelConfig gradient_toy_config() {
  ModelConfig c;
  c.encoder.lookback = 8;
  c.encoder.horizon = 4;
  c.encoder.channels = 2;
  c.encoder.temporal_dim = 4;
  c.encoder.d = 4;
  c.encoder.n_layers = 1;
  c.patch = 4;
  return c;
}

/// Total training loss of one toy window differentiated through the encoder,
/// the patched integration and the ridge fit, against central differences.
inline SuiteResult gradient_suite(std::uint64_t seed = 2024, double tol = 1e-4) {
  return detail::timed("gradients", [&] {
    const ModelConfig c = gradient_toy_config();
    Model m = init_model(c, seed);
    Rng rng = substream(seed, "selftest.gradients");
    const ForecastWindow w = random_window(8, 4, 2, 4, rng);
    const auto checks = oracle::finite_difference_check(m.parameters(), [&] {
      return window_losses(adapt_and_predict(w, m), w, c.patch).total;
    });
    double worst = 0.0;
    std::string worst_name;
    std::size_t zero = 0;
    for (const auto& ch : checks) {
      if (ch.rel_error > worst) {
        worst = ch.rel_error;
        worst_name = ch.name;
      }
      if (ch.analytic_norm == 0.0) ++zero;
    }
    SuiteResult r;
    r.passed = worst <= tol;
    r.detail = std::to_string(checks.size()) + " tensors, max rel error " + detail::fmt("%.3g", worst) +
               (worst_name.empty() ? "" : " (" + worst_name + ")") + ", " + std::to_string(zero) +
               " with zero gradient";
    return r;
  });
}

/// Continuity residual: ~0 on telescoping (u, dudt), positive when perturbed,
/// exactly 0 for a single patch.
inline SuiteResult continuity_suite(std::uint64_t seed = 2024, double tol = 1e-10) {
  return detail::timed("continuity", [&] {
    Rng rng = substream(seed, "selftest.continuity");
    std::uniform_real_distribution<double> ph(0.0, 6.0), noise(-0.5, 0.5);
    double worst_consistent = 0.0, min_perturbed = 1.0;
    bool single_zero = true;
    for (std::size_t S : {2, 4, 6, 12}) {
      const std::size_t total = 48, d = 3;
      std::vector<double> u(total * d), du(total * d), du_bad;
      for (std::size_t j = 0; j < d; ++j) {
        const double phase = ph(rng);
        for (std::size_t k = 0; k < total; ++k) {
          u[k * d + j] = std::sin(0.3 * static_cast<double>(k) + phase);
          du[k * d + j] = k == 0 ? 0.0 : u[k * d + j] - std::sin(0.3 * static_cast<double>(k - 1) + phase);
        }
      }
      du_bad = du;
      for (auto& x : du_bad) x += noise(rng);
      const Tensor ut = Tensor::from({total, d}, u);
      worst_consistent =
          std::max(worst_consistent, continuity_residual(ut, Tensor::from({total, d}, du), S).item());
      min_perturbed = std::min(min_perturbed, continuity_residual(ut, Tensor::from({total, d}, du_bad), S).item());
      const Tensor r1 = detail::random_matrix(S, d, rng), r2 = detail::random_matrix(S, d, rng);
      single_zero = single_zero && continuity_residual(r1, r2, S).item() == 0.0;
    }
    SuiteResult r;
    r.passed = worst_consistent <= tol && min_perturbed > 0.0 && single_zero;
    r.detail = "consistent max " + detail::fmt("%.3g", worst_consistent) + ", perturbed min " +
               detail::fmt("%.3g", min_perturbed) + ", single patch " + (single_zero ? "0" : "nonzero");
    return r;
  });
}

/// Constant series through the full pipeline at random parameters.
inline SuiteResult constant_fixpoint_suite(std::uint64_t seed = 2024, double tol = 1e-20) {
  return detail::timed("constant-fixpoint", [&] {
    Rng rng = substream(seed, "selftest.constant");
    std::uniform_real_distribution<double> level(-5.0, 5.0);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      ModelConfig c = gradient_toy_config();
      c.encoder.lookback = 24;
      c.encoder.horizon = 24;
      c.encoder.channels = 3;
      c.encoder.d = 16;
      c.patch = 12;
      const Model m = init_model(c, seed + static_cast<std::uint64_t>(trial));
      const std::vector<double> lv = {level(rng), level(rng), level(rng)};
      const ForecastWindow w = constant_window(24, 24, lv, 4, rng);
      NoGradGuard no_grad;
      const Tensor y = adapt_and_predict(w, m).y_hat;
      const auto yv = y.to_vector();
      double se = 0.0;
      for (std::size_t i = 0; i < yv.size(); ++i) se += (yv[i] - lv[i % 3]) * (yv[i] - lv[i % 3]);
      worst = std::max(worst, se / static_cast<double>(yv.size()));
    }
    SuiteResult r;
    r.passed = worst <= tol;
    r.detail = "max MSE " + detail::fmt("%.3g", worst);
    return r;
  });
}

inline std::vector<SuiteResult> run_selftest(std::uint64_t seed = 2024) {
  return {solver_oracle_suite(seed), ridge_oracle_suite(seed), gradient_suite(seed), continuity_suite(seed),
          constant_fixpoint_suite(seed)};
}

}  // namespace pdetime
