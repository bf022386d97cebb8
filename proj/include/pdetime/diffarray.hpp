#pragma once

// Minimal reverse-mode differentiable array engine.
//
// A Tensor is a cheap handle onto a shared graph node holding row-major
// 64-bit data. Operations on tensors that require gradients record a
// backward closure on the produced node; backward() walks the graph in
// reverse topological order and accumulates into every reachable node's
// gradient buffer. Leaf gradients accumulate across calls until
// zero_grad() is invoked.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pdetime/errors.hpp"

namespace pdetime {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first written
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(const Node&)> backward;

  bool is_leaf() const { return !backward; }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_size(shape) != values.size()) {
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape " + shape_string(shape));
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->data = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  /// Mutable access for parameter updates; never call on a node inside a live graph.
  std::span<double> mutable_data() { return node_->data; }
  std::vector<double> to_vector() const { return node_->data; }

  double item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return node_->data[0];
  }
  double operator()(std::size_t i) const { return node_->data.at(i); }
  double operator()(std::size_t i, std::size_t j) const {
    return node_->data.at(i * node_->shape.back() + j);
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }
  bool is_leaf() const { return node_->is_leaf(); }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  /// Copy of the values with no graph attached.
  Tensor detach() const { return from(shape(), node_->data, false); }

  detail::Node* node() const { return node_.get(); }
  const detail::NodePtr& node_ptr() const { return node_; }

  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

 private:
  detail::NodePtr node_;
};

/// Creates the output node of an operation. The backward closure is only
/// attached when recording is enabled and some input requires gradients.
/// Exposed so that modules can define fused differentiable operations.
inline Tensor custom_op(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs,
                        std::function<void(const detail::Node&)> backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  auto* n = out.node();
  n->requires_grad = true;
  for (const auto& t : inputs) n->parents.push_back(t.node_ptr());
  n->backward = std::move(backward);
  return out;
}

inline Tensor custom_op(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                        std::function<void(const detail::Node&)> backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  auto* n = out.node();
  n->requires_grad = true;
  for (const auto& t : inputs) n->parents.push_back(t.node_ptr());
  n->backward = std::move(backward);
  return out;
}

/// Populates gradients of every requires_grad node reachable from `loss`.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("shapes " + shape_string(a) + " and " + shape_string(b) +
                           " are not broadcastable");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` laid against `out`, zero along broadcast axes.
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> st(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t i = in.size() - 1 - k;
    const std::size_t o = out.size() - 1 - k;
    st[o] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return st;
}

template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t total = shape_size(out);
  const std::size_t r = out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (std::size_t k = r; k-- > 0;) {
      ++idx[k];
      ia += sa[k];
      ib += sb[k];
      if (idx[k] < out[k]) break;
      ia -= sa[k] * out[k];
      ib -= sb[k] * out[k];
      idx[k] = 0;
    }
  }
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw IndexError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(s));
  }
  AxisSplit a{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> y(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(xd[i]);
  auto* px = x.node();
  return custom_op(x.shape(), std::move(y), {x}, [px, deriv](const Node& out) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t i = 0; i < out.grad.size(); ++i) px->grad[i] += out.grad[i] * deriv(px->data[i], out.data[i]);
  });
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary operations with broadcasting
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  const Shape out = detail::broadcast_shape(a.shape(), b.shape());
  const auto sa = detail::broadcast_strides(a.shape(), out);
  const auto sb = detail::broadcast_strides(b.shape(), out);
  std::vector<double> y(shape_size(out));
  const auto ad = a.data();
  const auto bd = b.data();
  detail::for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) { y[o] = ad[ia] + bd[ib]; });
  auto *pa = a.node(), *pb = b.node();
  return custom_op(out, std::move(y), {a, b}, [pa, pb, sa, sb](const detail::Node& n) {
    if (pa->requires_grad) pa->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    detail::for_each_broadcast(n.shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (pa->requires_grad) pa->grad[ia] += n.grad[o];
      if (pb->requires_grad) pb->grad[ib] += n.grad[o];
    });
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  const Shape out = detail::broadcast_shape(a.shape(), b.shape());
  const auto sa = detail::broadcast_strides(a.shape(), out);
  const auto sb = detail::broadcast_strides(b.shape(), out);
  std::vector<double> y(shape_size(out));
  const auto ad = a.data();
  const auto bd = b.data();
  detail::for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) { y[o] = ad[ia] - bd[ib]; });
  auto *pa = a.node(), *pb = b.node();
  return custom_op(out, std::move(y), {a, b}, [pa, pb, sa, sb](const detail::Node& n) {
    if (pa->requires_grad) pa->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    detail::for_each_broadcast(n.shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (pa->requires_grad) pa->grad[ia] += n.grad[o];
      if (pb->requires_grad) pb->grad[ib] -= n.grad[o];
    });
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  const Shape out = detail::broadcast_shape(a.shape(), b.shape());
  const auto sa = detail::broadcast_strides(a.shape(), out);
  const auto sb = detail::broadcast_strides(b.shape(), out);
  std::vector<double> y(shape_size(out));
  const auto ad = a.data();
  const auto bd = b.data();
  detail::for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) { y[o] = ad[ia] * bd[ib]; });
  auto *pa = a.node(), *pb = b.node();
  return custom_op(out, std::move(y), {a, b}, [pa, pb, sa, sb](const detail::Node& n) {
    if (pa->requires_grad) pa->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    detail::for_each_broadcast(n.shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (pa->requires_grad) pa->grad[ia] += n.grad[o] * pb->data[ib];
      if (pb->requires_grad) pb->grad[ib] += n.grad[o] * pa->data[ia];
    });
  });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary operations
// ---------------------------------------------------------------------------

inline Tensor neg(const Tensor& x) {
  return detail::unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}
inline Tensor operator-(const Tensor& x) { return neg(x); }

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor sin(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

inline Tensor cos(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); });
}

/// GeLU, tanh approximation.
inline Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  return detail::unary(
      x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v))); },
      [](double v, double) {
        const double t = std::tanh(c * (v + a * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * a * v * v);
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  const auto xd = x.data();
  const double s = std::accumulate(xd.begin(), xd.end(), 0.0);
  auto* px = x.node();
  return custom_op({1}, {s}, {x}, [px](const detail::Node& n) {
    px->ensure_grad();
    for (auto& g : px->grad) g += n.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  const auto xd = x.data();
  const double inv = 1.0 / static_cast<double>(xd.size());
  const double s = std::accumulate(xd.begin(), xd.end(), 0.0) * inv;
  auto* px = x.node();
  return custom_op({1}, {s}, {x}, [px, inv](const detail::Node& n) {
    px->ensure_grad();
    for (auto& g : px->grad) g += n.grad[0] * inv;
  });
}

// ---------------------------------------------------------------------------
// Row-wise (last axis) normalizations
// ---------------------------------------------------------------------------

inline Tensor softmax_rows(const Tensor& x) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  const auto xd = x.data();
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * cols;
    double* out = y.data() + r * cols;
    const double m = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (out[c] = std::exp(in[c] - m));
    for (std::size_t c = 0; c < cols; ++c) out[c] /= z;
  }
  auto* px = x.node();
  return custom_op(x.shape(), std::move(y), {x}, [px, rows, cols](const detail::Node& n) {
    px->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yv = n.data.data() + r * cols;
      const double* g = n.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[c] * yv[c];
      for (std::size_t c = 0; c < cols; ++c) px->grad[r * cols + c] += yv[c] * (g[c] - dot);
    }
  });
}

/// Normalizes each row to zero mean and unit (population) variance.
inline Tensor layernorm_rows(const Tensor& x, double eps = 1e-12) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  const auto xd = x.data();
  std::vector<double> y(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = (in[c] - mu) * inv_std[r];
  }
  auto* px = x.node();
  return custom_op(x.shape(), std::move(y), {x}, [px, rows, cols, inv_std](const detail::Node& n) {
    px->ensure_grad();
    const double inv_n = 1.0 / static_cast<double>(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yv = n.data.data() + r * cols;
      const double* g = n.grad.data() + r * cols;
      double gm = 0.0, gy = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        gm += g[c];
        gy += g[c] * yv[c];
      }
      gm *= inv_n;
      gy *= inv_n;
      for (std::size_t c = 0; c < cols; ++c) px->grad[r * cols + c] += inv_std[r] * (g[c] - gm - yv[c] * gy);
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix product. Supports rank-2 and rank-3 operands; a missing or unit
// batch dimension broadcasts against the other operand.
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto fail = [&] {
    throw DimensionError("matmul: incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
  };
  if (sa.size() < 2 || sa.size() > 3 || sb.size() < 2 || sb.size() > 3) fail();
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t k2 = sb[sb.size() - 2], n = sb.back();
  if (k != k2) fail();
  const std::size_t ba = sa.size() == 3 ? sa[0] : 1;
  const std::size_t bb = sb.size() == 3 ? sb[0] : 1;
  if (ba != bb && ba != 1 && bb != 1) fail();
  const std::size_t batch = std::max(ba, bb);
  Shape out = (sa.size() == 3 || sb.size() == 3) ? Shape{batch, m, n} : Shape{m, n};

  std::vector<double> y(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    detail::ConstMap A(a.data().data() + (ba == 1 ? 0 : i) * m * k, m, k);
    detail::ConstMap B(b.data().data() + (bb == 1 ? 0 : i) * k * n, k, n);
    detail::MutMap Y(y.data() + i * m * n, m, n);
    Y.noalias() = A * B;
  }
  auto *pa = a.node(), *pb = b.node();
  return custom_op(std::move(out), std::move(y), {a, b}, [=](const detail::Node& node) {
    if (pa->requires_grad) pa->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    for (std::size_t i = 0; i < batch; ++i) {
      detail::ConstMap G(node.grad.data() + i * m * n, m, n);
      const std::size_t ia = (ba == 1 ? 0 : i) * m * k;
      const std::size_t ib = (bb == 1 ? 0 : i) * k * n;
      if (pa->requires_grad) {
        detail::ConstMap B(pb->data.data() + ib, k, n);
        detail::MutMap GA(pa->grad.data() + ia, m, k);
        GA.noalias() += G * B.transpose();
      }
      if (pb->requires_grad) {
        detail::ConstMap A(pa->data.data() + ia, m, k);
        detail::MutMap GB(pb->grad.data() + ib, k, n);
        GB.noalias() += A.transpose() * G;
      }
    }
  });
}

/// Swaps the last two axes.
inline Tensor transpose(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_string(s));
  const std::size_t r = s[s.size() - 2], c = s.back();
  const std::size_t batch = x.size() / (r * c);
  Shape out = s;
  std::swap(out[out.size() - 2], out.back());
  std::vector<double> y(x.size());
  const auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) y[b * r * c + j * r + i] = xd[b * r * c + i * c + j];
  auto* px = x.node();
  return custom_op(std::move(out), std::move(y), {x}, [px, batch, r, c](const detail::Node& n) {
    px->ensure_grad();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) px->grad[b * r * c + i * c + j] += n.grad[b * r * c + j * r + i];
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  auto* px = x.node();
  return custom_op(std::move(shape), x.to_vector(), {x}, [px](const detail::Node& n) {
    px->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) px->grad[i] += n.grad[i];
  });
}

/// Elements [begin, end) along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto sp = detail::split_axis(x.shape(), axis, "slice");
  if (begin > end || end > sp.n) {
    throw IndexError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of bounds for axis of length " + std::to_string(sp.n));
  }
  const std::size_t len = end - begin;
  Shape out = x.shape();
  out[axis] = len;
  std::vector<double> y(sp.outer * len * sp.inner);
  const auto xd = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(xd.data() + (o * sp.n + begin) * sp.inner, len * sp.inner, y.data() + o * len * sp.inner);
  auto* px = x.node();
  return custom_op(std::move(out), std::move(y), {x}, [px, sp, begin, len](const detail::Node& n) {
    px->ensure_grad();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < len * sp.inner; ++i)
        px->grad[(o * sp.n + begin) * sp.inner + i] += n.grad[o * len * sp.inner + i];
  });
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  Shape out = parts.front().shape();
  if (axis >= out.size()) throw IndexError("concat: axis " + std::to_string(axis) + " out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == out.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == out[i];
    if (!ok) {
      throw DimensionError("concat: " + shape_string(s) + " does not match " + shape_string(out) +
                           " outside axis " + std::to_string(axis));
    }
    total += s[axis];
  }
  out[axis] = total;
  const auto sp = detail::split_axis(out, axis, "concat");
  std::vector<double> y(shape_size(out));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t w = p.shape()[axis] * sp.inner;
    const auto pd = p.data();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(pd.data() + o * w, w, y.data() + o * sp.n * sp.inner + off * sp.inner);
    off += p.shape()[axis];
  }
  std::vector<detail::Node*> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return custom_op(std::move(out), std::move(y), parts, [nodes, offsets, sp, axis](const detail::Node& n) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      auto* p = nodes[k];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      const std::size_t w = p->shape[axis] * sp.inner;
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < w; ++i) p->grad[o * w + i] += n.grad[o * sp.n * sp.inner + offsets[k] * sp.inner + i];
    }
  });
}

/// Inclusive prefix sum along `axis`.
inline Tensor cumsum(const Tensor& x, std::size_t axis) {
  const auto sp = detail::split_axis(x.shape(), axis, "cumsum");
  std::vector<double> y(x.size());
  const auto xd = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      double acc = 0.0;
      for (std::size_t i = 0; i < sp.n; ++i) {
        const std::size_t idx = (o * sp.n + i) * sp.inner + in;
        acc += xd[idx];
        y[idx] = acc;
      }
    }
  auto* px = x.node();
  return custom_op(x.shape(), std::move(y), {x}, [px, sp](const detail::Node& n) {
    px->ensure_grad();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t in = 0; in < sp.inner; ++in) {
        double acc = 0.0;
        for (std::size_t i = sp.n; i-- > 0;) {
          const std::size_t idx = (o * sp.n + i) * sp.inner + in;
          acc += n.grad[idx];
          px->grad[idx] += acc;
        }
      }
  });
}

/// Reverses element order along `axis`.
inline Tensor flip(const Tensor& x, std::size_t axis) {
  const auto sp = detail::split_axis(x.shape(), axis, "flip");
  std::vector<double> y(x.size());
  const auto xd = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.n; ++i)
      std::copy_n(xd.data() + (o * sp.n + i) * sp.inner, sp.inner, y.data() + (o * sp.n + (sp.n - 1 - i)) * sp.inner);
  auto* px = x.node();
  return custom_op(x.shape(), std::move(y), {x}, [px, sp](const detail::Node& n) {
    px->ensure_grad();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.n; ++i)
        for (std::size_t in = 0; in < sp.inner; ++in)
          px->grad[(o * sp.n + i) * sp.inner + in] += n.grad[(o * sp.n + (sp.n - 1 - i)) * sp.inner + in];
  });
}

// ---------------------------------------------------------------------------
// Loss core
// ---------------------------------------------------------------------------

/// Mean Huber-style Smooth L1 between equally shaped tensors.
inline Tensor smooth_l1_mean(const Tensor& pred, const Tensor& target, double beta) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("smooth_l1: shapes " + shape_string(pred.shape()) + " and " +
                         shape_string(target.shape()) + " differ");
  }
  if (!(beta > 0.0)) throw ContractError("smooth_l1: beta must be positive");
  const auto p = pred.data();
  const auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double e = p[i] - t[i];
    const double ae = std::abs(e);
    acc += ae < beta ? 0.5 * e * e / beta : ae - 0.5 * beta;
  }
  const double inv = 1.0 / static_cast<double>(p.size());
  auto *pp = pred.node(), *pt = target.node();
  return custom_op({1}, {acc * inv}, {pred, target}, [pp, pt, beta, inv](const detail::Node& n) {
    if (pp->requires_grad) pp->ensure_grad();
    if (pt->requires_grad) pt->ensure_grad();
    for (std::size_t i = 0; i < pp->data.size(); ++i) {
      const double e = pp->data[i] - pt->data[i];
      const double de = std::abs(e) < beta ? e / beta : (e > 0 ? 1.0 : -1.0);
      const double g = n.grad[0] * inv * de;
      if (pp->requires_grad) pp->grad[i] += g;
      if (pt->requires_grad) pt->grad[i] -= g;
    }
  });
}

}  // namespace pdetime
