#pragma once

// ADAM training over lookback/horizon windows, evaluation, and the binary
// checkpoint container.
//
// Checkpoint layout (all integers unsigned little-endian, reals IEEE-754
// binary64 little-endian):
//
//   char[8]  magic "PDETIME1"
//   u32      format version (1)
//   u64 n, n bytes      experiment configuration snapshot (UTF-8 text)
//   u64 x 10            lookback, horizon, channels, temporal_dim, d, k,
//                       n_layers, n_heads, cff_scales, patch
//   f64                 ridge lambda
//   u8 x 4              use_temporal, use_spatial, use_initial, use_solver
//   u64 e, then e x     (u64 epoch, f64 train_loss, f64 val_lp)
//   u64 p, then p x     (u32 name_len, name bytes, u32 rank, u64 dims[rank],
//                        f64 values[prod(dims)])
//
// Tensor names are those of Model::state(), which includes the frozen
// Fourier frequencies so a reload reproduces the forward pass bit-for-bit.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "pdetime/baselines.hpp"
#include "pdetime/decoder_meta.hpp"
#include "pdetime/diffarray.hpp"
#include "pdetime/errors.hpp"
#include "pdetime/losses.hpp"
#include "pdetime/model.hpp"
#include "pdetime/rng.hpp"
#include "pdetime/window.hpp"

namespace pdetime {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected ADAM update of every parameter from its gradient buffer.
inline void adam_step(const ParameterList& params, AdamState& state, const AdamHyper& h) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw ContractError("adam_step: parameter '" + p.name + "' has no gradient");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.size(), 0.0);
      state.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: optimizer state does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    auto w = t.mutable_data();
    const auto g = t.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
      w[j] -= h.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + h.eps);
    }
  }
}

inline double global_grad_norm(const ParameterList& params) {
  double s = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) s += g * g;
  return std::sqrt(s);
}

/// Rescales gradients to `max_norm` when exceeded. Returns true if clipped.
inline bool clip_grad_norm(const ParameterList& params, double max_norm) {
  if (!(max_norm > 0.0)) return false;
  const double norm = global_grad_norm(params);
  if (norm <= max_norm) return false;
  const double f = max_norm / norm;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    for (auto& g : t.mutable_grad()) g *= f;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_lp = 0.0;
};

struct Checkpoint {
  std::string config_snapshot;
  Model model;
  std::vector<EpochRecord> history;
};

namespace detail {

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IngestionError("checkpoint: unexpected end of file");
  return v;
}

inline std::string get_string(std::istream& in, std::uint64_t n) {
  if (n > (1ULL << 32)) throw IngestionError("checkpoint: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw IngestionError("checkpoint: unexpected end of file");
  return s;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'P', 'D', 'E', 'T', 'I', 'M', 'E', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const Checkpoint& ck, std::ostream& out) {
  using detail::put;
  out.write(kCheckpointMagic, 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, ck.config_snapshot.size());
  out.write(ck.config_snapshot.data(), static_cast<std::streamsize>(ck.config_snapshot.size()));
  const auto& mc = ck.model.config;
  const auto& e = mc.encoder;
  for (std::size_t v : {e.lookback, e.horizon, e.channels, e.temporal_dim, e.d, e.k, e.n_layers, e.n_heads,
                        e.cff_scales, mc.patch})
    put<std::uint64_t>(out, v);
  put<double>(out, mc.ridge_lambda);
  for (bool b : {e.use_temporal, e.use_spatial, mc.use_initial, mc.use_solver}) put<std::uint8_t>(out, b ? 1 : 0);
  put<std::uint64_t>(out, ck.history.size());
  for (const auto& r : ck.history) {
    put<std::uint64_t>(out, r.epoch);
    put<double>(out, r.train_loss);
    put<double>(out, r.val_lp);
  }
  const auto state = ck.model.state();
  put<std::uint64_t>(out, state.size());
  for (const auto& [name, t] : state) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t dsz : t.shape()) put<std::uint64_t>(out, dsz);
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

inline Checkpoint load_checkpoint(std::istream& in) {
  using detail::get;
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw IngestionError("checkpoint: bad magic (expected PDETIME1)");
  if (get<std::uint32_t>(in) != kCheckpointVersion) throw IngestionError("checkpoint: unsupported format version");
  Checkpoint ck;
  ck.config_snapshot = detail::get_string(in, get<std::uint64_t>(in));
  ModelConfig mc;
  auto& e = mc.encoder;
  for (std::size_t* f : {&e.lookback, &e.horizon, &e.channels, &e.temporal_dim, &e.d, &e.k, &e.n_layers, &e.n_heads,
                         &e.cff_scales, &mc.patch})
    *f = static_cast<std::size_t>(get<std::uint64_t>(in));
  mc.ridge_lambda = get<double>(in);
  for (bool* b : {&e.use_temporal, &e.use_spatial, &mc.use_initial, &mc.use_solver}) *b = get<std::uint8_t>(in) != 0;
  const auto n_hist = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n_hist; ++i) {
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(get<std::uint64_t>(in));
    r.train_loss = get<double>(in);
    r.val_lp = get<double>(in);
    ck.history.push_back(r);
  }
  ck.model = init_model(mc, 0);
  std::unordered_map<std::string, Tensor> by_name;
  for (const auto& [name, t] : ck.model.state()) by_name.emplace(name, t);
  const auto n_tensors = get<std::uint64_t>(in);
  if (n_tensors != by_name.size()) throw IngestionError("checkpoint: tensor count does not match model configuration");
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    const std::string name = detail::get_string(in, get<std::uint32_t>(in));
    const auto rank = get<std::uint32_t>(in);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(in)));
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IngestionError("checkpoint: unexpected tensor '" + name + "'");
    if (it->second.shape() != shape) throw IngestionError("checkpoint: tensor '" + name + "' has shape " + shape_string(shape));
    auto dst = it->second.mutable_data();
    in.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size() * sizeof(double)));
    if (!in) throw IngestionError("checkpoint: unexpected end of file");
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  save_checkpoint(ck, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// MSE/MAE of horizon predictions over all windows. Optional per-channel
/// scales convert standardized errors to raw units.
inline Metrics evaluate(const Model& model, const std::vector<ForecastWindow>& windows,
                        std::vector<double> channel_scale = {}) {
  if (windows.empty()) throw ConfigError("evaluate: split produced no windows");
  NoGradGuard no_grad;
  const Tensor tau0 = embed_time(windows.front().grid, model.encoder);
  MetricAccumulator acc(std::move(channel_scale));
  for (const auto& w : windows) {
    const Prediction pr = adapt_and_predict(w, model, tau0);
    acc.add(pr.y_hat.data(), w.Y.data(), w.channels());
  }
  return acc.result();
}

/// Mean prediction loss L_p over windows, no gradients.
inline double mean_prediction_loss(const Model& model, const std::vector<ForecastWindow>& windows, double beta) {
  if (windows.empty()) return 0.0;
  NoGradGuard no_grad;
  const Tensor tau0 = embed_time(windows.front().grid, model.encoder);
  double s = 0.0;
  for (const auto& w : windows) {
    const Prediction pr = adapt_and_predict(w, model, tau0);
    s += prediction_loss(pr.deltas, w.Y, pr.x_init, beta).item();
  }
  return s / static_cast<double>(windows.size());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

using LogFn = std::function<void(const std::string&)>;

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::size_t patience = 3;  // 0 disables early stopping
  std::uint64_t seed = 2024;
  double clip_norm = 5.0;    // global gradient norm; <= 0 disables clipping
  double beta = 1.0;         // Smooth L1 transition point
};

struct BatchReport {
  LossReport mean;  // averaged over the windows of the batch
  bool clipped = false;
};

/// Forward/backward over one batch, gradients left in the parameters.
/// The time-index embedding is shared by all windows: each window is
/// differentiated against a detached copy, and the accumulated gradient is
/// pushed through the time path once at the end.
inline BatchReport accumulate_batch_gradients(const Model& model, const std::vector<const ForecastWindow*>& batch,
                                              double beta) {
  const ParameterList params = model.parameters();
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.mutable_grad();
    t.zero_grad();
  }
  const Tensor tau0 = embed_time(batch.front()->grid, model.encoder);
  Tensor tau_leaf = tau0.detach();
  tau_leaf.set_requires_grad(true);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  BatchReport rep;
  for (const auto* w : batch) {
    const Prediction pr = adapt_and_predict(*w, model, tau_leaf);
    const LossTerms terms = window_losses(pr, *w, model.config.patch, beta);
    const LossReport r = terms.report();
    if (!std::isfinite(r.total)) throw NumericError("non-finite loss");
    rep.mean.l_p += r.l_p * inv_b;
    rep.mean.l_f += r.l_f * inv_b;
    rep.mean.l_c += r.l_c * inv_b;
    backward(scale(terms.total, inv_b));
  }
  rep.mean.total = rep.mean.l_p + rep.mean.l_c + rep.mean.l_f;
  if (tau0.requires_grad()) {
    const Tensor upstream = Tensor::from(tau_leaf.shape(), std::vector<double>(tau_leaf.grad().begin(), tau_leaf.grad().end()));
    backward(sum(mul(tau0, upstream)));
  }
  return rep;
}

struct TrainResult {
  Checkpoint checkpoint;
  std::size_t clip_events = 0;
  std::size_t best_epoch = 0;
};

/// Epochs over seeded shuffles of the training windows; the parameters with
/// the best validation L_p are restored at the end. Stops early after
/// `patience` epochs without improvement (0 disables early stopping).
inline TrainResult train(const Model& initial, const TrainConfig& cfg, const std::vector<ForecastWindow>& train_windows,
                         const std::vector<ForecastWindow>& val_windows, const LogFn& log = {}) {
  Model model = clone(initial);
  TrainResult res;
  res.checkpoint.model = model;
  if (cfg.epochs == 0) return res;
  if (train_windows.empty()) throw ConfigError("train: no training windows");

  const ParameterList params = model.parameters();
  AdamState adam;
  const AdamHyper hyper{cfg.lr};
  Rng shuffle_rng = substream(cfg.seed, "shuffle");
  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<std::vector<double>> best;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_total = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const ForecastWindow*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(&train_windows[order[i]]);
      BatchReport rep;
      try {
        rep = accumulate_batch_gradients(model, batch, cfg.beta);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(n_batches));
      }
      rep.clipped = clip_grad_norm(params, cfg.clip_norm);
      if (rep.clipped) {
        ++res.clip_events;
        if (log) log("epoch " + std::to_string(epoch) + " batch " + std::to_string(n_batches) + ": gradient clipped");
      }
      adam_step(params, adam, hyper);
      epoch_total += rep.mean.total;
      ++n_batches;
    }
    const double val_lp = val_windows.empty() ? epoch_total / static_cast<double>(n_batches)
                                              : mean_prediction_loss(model, val_windows, cfg.beta);
    res.checkpoint.history.push_back({epoch, epoch_total / static_cast<double>(n_batches), val_lp});
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %zu: train_loss=%.6g val_lp=%.6g", epoch,
                    epoch_total / static_cast<double>(n_batches), val_lp);
      log(buf);
    }
    if (val_lp < best_val) {
      best_val = val_lp;
      res.best_epoch = epoch;
      since_best = 0;
      best.clear();
      for (const auto& p : params) best.push_back(p.tensor.to_vector());
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      if (log) log("early stop after epoch " + std::to_string(epoch));
      break;
    }
  }
  for (std::size_t i = 0; i < params.size() && !best.empty(); ++i) {
    Tensor t = params[i].tensor;
    std::copy(best[i].begin(), best[i].end(), t.mutable_data().begin());
  }
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  return res;
}

}  // namespace pdetime
