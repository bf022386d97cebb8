#pragma once

// Comparators and the shared MSE/MAE accumulator.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pdetime/errors.hpp"
#include "pdetime/window.hpp"

namespace pdetime {

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};

/// Running MSE/MAE. With per-channel scales, errors are multiplied back into
/// raw units before accumulating.
class MetricAccumulator {
 public:
  MetricAccumulator() = default;
  explicit MetricAccumulator(std::vector<double> channel_scale) : scale_(std::move(channel_scale)) {}

  void add(std::span<const double> pred, std::span<const double> target, std::size_t channels) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      double e = pred[i] - target[i];
      if (!scale_.empty()) e *= scale_[i % channels];
      se_ += e * e;
      ae_ += std::abs(e);
    }
    n_ += pred.size();
  }

  std::size_t count() const { return n_; }
  Metrics result() const {
    if (n_ == 0) throw ConfigError("no predictions to evaluate");
    return {se_ / static_cast<double>(n_), ae_ / static_cast<double>(n_)};
  }

 private:
  std::vector<double> scale_;
  double se_ = 0.0, ae_ = 0.0;
  std::size_t n_ = 0;
};

/// Y_hat = x_init for every horizon step.
inline Metrics persistence_metrics(const std::vector<ForecastWindow>& windows, std::vector<double> scale = {}) {
  MetricAccumulator acc(std::move(scale));
  for (const auto& w : windows) {
    const std::size_t H = w.horizon(), C = w.channels();
    std::vector<double> pred(H * C);
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t c = 0; c < C; ++c) pred[h * C + c] = w.x_init(c);
    acc.add(pred, w.Y.data(), C);
  }
  return acc.result();
}

/// Per-channel ridge regression from that channel's flattened lookback
/// (plus bias) to its horizon, fitted on a set of training windows.
class LinearLookbackBaseline {
 public:
  LinearLookbackBaseline(const std::vector<ForecastWindow>& train, double lambda = 1.0) {
    if (train.empty()) throw ConfigError("linear baseline: no training windows");
    L_ = train.front().lookback();
    H_ = train.front().horizon();
    C_ = train.front().channels();
    const std::size_t n = train.size();
    for (std::size_t c = 0; c < C_; ++c) {
      Eigen::MatrixXd X(n, L_ + 1), Y(n, H_);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < L_; ++l) X(i, l) = train[i].X(l, c);
        X(i, L_) = 1.0;
        for (std::size_t h = 0; h < H_; ++h) Y(i, h) = train[i].Y(h, c);
      }
      Eigen::MatrixXd A = X.transpose() * X;
      A.diagonal().array() += lambda;
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      if (llt.info() != Eigen::Success) throw NumericError("linear baseline: factorization failed");
      weights_.push_back(llt.solve(X.transpose() * Y));
    }
  }

  /// Horizon forecast [H x C], row-major.
  std::vector<double> predict(const ForecastWindow& w) const {
    std::vector<double> out(H_ * C_);
    for (std::size_t c = 0; c < C_; ++c) {
      const auto& W = weights_[c];
      for (std::size_t h = 0; h < H_; ++h) {
        double s = W(L_, h);
        for (std::size_t l = 0; l < L_; ++l) s += w.X(l, c) * W(l, h);
        out[h * C_ + c] = s;
      }
    }
    return out;
  }

  Metrics evaluate(const std::vector<ForecastWindow>& windows, std::vector<double> scale = {}) const {
    MetricAccumulator acc(std::move(scale));
    for (const auto& w : windows) acc.add(predict(w), w.Y.data(), C_);
    return acc.result();
  }

 private:
  std::size_t L_ = 0, H_ = 0, C_ = 0;
  std::vector<Eigen::MatrixXd> weights_;
};

}  // namespace pdetime
