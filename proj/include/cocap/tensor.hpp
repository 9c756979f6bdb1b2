#pragma once

// Reverse-mode differentiable tensors.
//
// A Tensor is a shared handle to a row-major f64 buffer. Primitives executed
// while a Tape is alive on the current thread, and touching at least one
// tensor that requires grad, are recorded on that tape; Tape::backward walks
// the record in exact reverse order. Without a tape nothing is recorded, so
// inference does no bookkeeping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cocap/error.hpp"

namespace cocap::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

class Tape;
class Tensor;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  const char* op = "leaf";
  std::function<void(const std::vector<double>&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

using NodePtr = std::shared_ptr<Node>;

inline thread_local Tape* active_tape = nullptr;

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    node_->value.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (values.size() != shape_numel(shape))
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    node_->value = std::move(values);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  /// Direct write access, meant for parameters and test fixtures.
  std::span<double> mutable_values() { return node_->value; }

  double item() const {
    if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
  }
  double at(std::size_t i) const { return node_->value.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->value.at(r * node_->shape.at(1) + c); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Accumulated gradient; zeros if nothing has flowed in yet.
  std::span<const double> grad() const { return node_->grad_buffer(); }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  /// New leaf holding a copy of the values.
  Tensor detach(bool requires_grad = false) const { return Tensor(shape(), node_->value, requires_grad); }

  const detail::NodePtr& node() const { return node_; }

 private:
  friend struct TensorAccess;
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}
  detail::NodePtr node_;
};

/// Ordered record of executed primitives for one unit of work.
class Tape {
 public:
  Tape() : previous_(detail::active_tape) { detail::active_tape = this; }
  ~Tape() { detail::active_tape = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return detail::active_tape; }

  void record(detail::NodePtr node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 and propagates in reverse execution order.
  /// Leaf gradients accumulate; call zero_grad between steps.
  void backward(const Tensor& root) {
    if (root.numel() != 1) throw ShapeError("backward: root of shape " + shape_str(root.shape()) + " is not scalar");
    if (!root.requires_grad()) return;
    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      auto& n = **it;
      if (n.grad.empty() || !n.backward) continue;
      n.backward(n.grad);
    }
  }

 private:
  Tape* previous_;
  std::vector<detail::NodePtr> nodes_;
};

struct TensorAccess {
  static Tensor wrap(detail::NodePtr n) { return Tensor(std::move(n)); }
};

namespace detail {

inline bool recording(std::initializer_list<const Tensor*> inputs) {
  if (active_tape == nullptr) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

inline Tensor make(const char* op, Shape shape, std::vector<double> values) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->shape = std::move(shape);
  n->value = std::move(values);
  return TensorAccess::wrap(std::move(n));
}

template <class Fn>
void attach(Tensor& out, Fn&& fn) {
  auto& n = *out.node();
  n.requires_grad = true;
  n.backward = std::forward<Fn>(fn);
  active_tape->record(out.node());
}

[[noreturn]] inline void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

inline void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
}

// C[m,n] (+)= A[m,k] * B[k,n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

inline std::vector<double> transposed(const double* a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

inline AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives

/// [m,k] x [k,n] -> [m,n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) detail::shape_mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  auto r = detail::make("matmul", {m, n}, std::move(out));
  if (detail::recording({&a, &b})) {
    detail::attach(r, [an = a.node(), bn = b.node(), m, k, n](const std::vector<double>& g) {
      if (an->requires_grad) {
        const auto bt = detail::transposed(bn->value.data(), k, n);
        detail::gemm_nn(g.data(), bt.data(), an->grad_buffer().data(), m, n, k);
      }
      if (bn->requires_grad) detail::gemm_tn(an->value.data(), g.data(), bn->grad_buffer().data(), m, k, n);
    });
  }
  return r;
}

/// Elementwise sum of equally shaped tensors.
inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) detail::shape_mismatch("add", a.shape(), b.shape());
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto r = detail::make("add", a.shape(), std::move(out));
  if (detail::recording({&a, &b})) {
    detail::attach(r, [an = a.node(), bn = b.node()](const std::vector<double>& g) {
      for (auto* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        auto& dst = n->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      }
    });
  }
  return r;
}

/// x[..., d] + bias[d]; the only broadcasting rule.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t d = bias.numel();
  if (x.rank() == 0 || x.shape().back() != d) detail::shape_mismatch("add_bias", x.shape(), bias.shape());
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto bv = bias.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % d];
  auto r = detail::make("add_bias", x.shape(), std::move(out));
  if (detail::recording({&x, &bias})) {
    detail::attach(r, [xn = x.node(), bn = bias.node(), d](const std::vector<double>& g) {
      if (xn->requires_grad) {
        auto& dst = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& dst = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i % d] += g[i];
      }
    });
  }
  return r;
}

inline Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= c;
  auto r = detail::make("scale", x.shape(), std::move(out));
  if (detail::recording({&x})) {
    detail::attach(r, [xn = x.node(), c](const std::vector<double>& g) {
      auto& dst = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += c * g[i];
    });
  }
  return r;
}

/// GELU, tanh approximation.
inline Tensor gelu(const Tensor& x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double c3 = 0.044715;
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(k * (v + c3 * v * v * v)));
  }
  auto r = detail::make("gelu", x.shape(), std::move(out));
  if (detail::recording({&x})) {
    detail::attach(r, [xn = x.node()](const std::vector<double>& g) {
      auto& dst = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xn->value[i];
        const double t = std::tanh(k * (v + c3 * v * v * v));
        const double dt = (1.0 - t * t) * k * (1.0 + 3.0 * c3 * v * v);
        dst[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
      }
    });
  }
  return r;
}

inline Tensor relu(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  auto r = detail::make("relu", x.shape(), std::move(out));
  if (detail::recording({&x})) {
    detail::attach(r, [xn = x.node()](const std::vector<double>& g) {
      auto& dst = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xn->value[i] > 0.0) dst[i] += g[i];
    });
  }
  return r;
}

/// Gathers rows of a [V, d] table: ids -> [n, d]. Also serves as a row gather.
inline Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  detail::require_rank("embedding_lookup", table, 2);
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  const auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows)
      throw StructuralError("embedding_lookup: id " + std::to_string(ids[i]) + " >= table size " +
                            std::to_string(rows));
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  auto r = detail::make("embedding_lookup", {ids.size(), d}, std::move(out));
  if (detail::recording({&table})) {
    detail::attach(r, [tn = table.node(), idv = std::vector<std::size_t>(ids.begin(), ids.end()),
                       d](const std::vector<double>& g) {
      auto& dst = tn->grad_buffer();
      for (std::size_t i = 0; i < idv.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) dst[idv[i] * d + j] += g[i * d + j];
    });
  }
  return r;
}

inline Tensor embedding_lookup(const Tensor& table, std::initializer_list<std::size_t> ids) {
  return embedding_lookup(table, std::span<const std::size_t>(ids.begin(), ids.size()));
}

/// Normalizes over the last axis, then applies gain and bias of that width.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d) detail::shape_mismatch("layer_norm", x.shape(), gamma.shape());
  if (beta.numel() != d) detail::shape_mismatch("layer_norm", x.shape(), beta.shape());
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  auto res = detail::make("layer_norm", x.shape(), std::move(out));
  if (detail::recording({&x, &gamma, &beta})) {
    detail::attach(res, [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat),
                         inv_std = std::move(inv_std), d, rows](const std::vector<double>& g) {
      const auto& gv = gn->value;
      if (gn->requires_grad) {
        auto& dg = gn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) dg[i % d] += g[i] * xhat[i];
      }
      if (bn->requires_grad) {
        auto& db = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) db[i % d] += g[i];
      }
      if (xn->requires_grad) {
        auto& dx = xn->grad_buffer();
        std::vector<double> gh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_gh = 0.0, mean_ghx = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            gh[j] = g[r * d + j] * gv[j];
            mean_gh += gh[j];
            mean_ghx += gh[j] * xhat[r * d + j];
          }
          mean_gh /= static_cast<double>(d);
          mean_ghx /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j)
            dx[r * d + j] += inv_std[r] * (gh[j] - mean_gh - xhat[r * d + j] * mean_ghx);
        }
      }
    });
  }
  return res;
}

/// Softmax along `axis`. Entries equal to -inf get exactly zero weight; a
/// slice that is entirely -inf yields all zeros.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto sp = detail::split_axis("softmax", x.shape(), axis);
  const auto xv = x.values();
  std::vector<double> out(xv.size(), 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < sp.len; ++l) mx = std::max(mx, xv[base + l * sp.inner]);
      if (mx == -std::numeric_limits<double>::infinity()) continue;
      double sum = 0.0;
      for (std::size_t l = 0; l < sp.len; ++l) {
        const double e = std::exp(xv[base + l * sp.inner] - mx);
        out[base + l * sp.inner] = e;
        sum += e;
      }
      for (std::size_t l = 0; l < sp.len; ++l) out[base + l * sp.inner] /= sum;
    }
  }
  auto r = detail::make("softmax", x.shape(), std::move(out));
  if (detail::recording({&x})) {
    detail::attach(r, [xn = x.node(), yn = std::weak_ptr<detail::Node>(r.node()), sp](const std::vector<double>& g) {
      const auto& y = yn.lock()->value;
      auto& dx = xn->grad_buffer();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.len * sp.inner + in;
          double dot = 0.0;
          for (std::size_t l = 0; l < sp.len; ++l) dot += g[base + l * sp.inner] * y[base + l * sp.inner];
          for (std::size_t l = 0; l < sp.len; ++l) {
            const std::size_t i = base + l * sp.inner;
            dx[i] += y[i] * (g[i] - dot);
          }
        }
      }
    });
  }
  return r;
}

/// Joins tensors along `axis`; all other extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts[0].shape();
  if (axis >= shape.size()) throw ShapeError("concat: axis out of range for " + shape_str(shape));
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size()) detail::shape_mismatch("concat", parts[0].shape(), p.shape());
    for (std::size_t i = 0; i < shape.size(); ++i)
      if (i != axis && p.dim(i) != shape[i]) detail::shape_mismatch("concat", parts[0].shape(), p.shape());
    total += p.dim(axis);
  }
  shape[axis] = total;
  const auto sp = detail::split_axis("concat", shape, axis);
  std::vector<double> out(shape_numel(shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.dim(axis);
    const auto pv = p.values();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * len * sp.inner), len * sp.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * sp.inner));
    offset += len;
  }
  auto r = detail::make("concat", shape, std::move(out));
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (any && Tape::active() != nullptr) {
    std::vector<detail::NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    detail::attach(r, [nodes = std::move(nodes), offsets = std::move(offsets), sp, total,
                       axis](const std::vector<double>& g) {
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        auto& n = *nodes[k];
        if (!n.requires_grad) continue;
        const std::size_t len = n.shape[axis];
        auto& dst = n.grad_buffer();
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const double* src = g.data() + (o * total + offsets[k]) * sp.inner;
          double* d = dst.data() + o * len * sp.inner;
          for (std::size_t i = 0; i < len * sp.inner; ++i) d[i] += src[i];
        }
      }
    });
  }
  return r;
}

/// Mean along `axis`, keeping that axis with extent 1.
inline Tensor mean(const Tensor& x, std::size_t axis) {
  const auto sp = detail::split_axis("mean", x.shape(), axis);
  if (sp.len == 0) throw ShapeError("mean: empty axis in " + shape_str(x.shape()));
  Shape shape = x.shape();
  shape[axis] = 1;
  const auto xv = x.values();
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < sp.len; ++l)
      for (std::size_t in = 0; in < sp.inner; ++in) out[o * sp.inner + in] += xv[(o * sp.len + l) * sp.inner + in];
  const double inv = 1.0 / static_cast<double>(sp.len);
  for (auto& v : out) v *= inv;
  auto r = detail::make("mean", shape, std::move(out));
  if (detail::recording({&x})) {
    detail::attach(r, [xn = x.node(), sp, inv](const std::vector<double>& g) {
      auto& dx = xn->grad_buffer();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t l = 0; l < sp.len; ++l)
          for (std::size_t in = 0; in < sp.inner; ++in)
            dx[(o * sp.len + l) * sp.inner + in] += g[o * sp.inner + in] * inv;
    });
  }
  return r;
}

/// Sum of all entries, as a one-element tensor.
inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto r = detail::make("sum", {1}, {s});
  if (detail::recording({&x})) {
    detail::attach(r, [xn = x.node()](const std::vector<double>& g) {
      auto& dx = xn->grad_buffer();
      for (auto& v : dx) v += g[0];
    });
  }
  return r;
}

/// Replaces entries where mask != 0 by `value`; those entries pass no gradient.
inline Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != x.numel())
    throw ShapeError("masked_fill: mask of " + std::to_string(mask.size()) + " entries for shape " +
                     shape_str(x.shape()));
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = value;
  auto r = detail::make("masked_fill", x.shape(), std::move(out));
  if (detail::recording({&x})) {
    detail::attach(r, [xn = x.node(), m = std::vector<std::uint8_t>(mask.begin(), mask.end())](
                          const std::vector<double>& g) {
      auto& dx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!m[i]) dx[i] += g[i];
    });
  }
  return r;
}

inline Tensor transpose(const Tensor& x) {
  detail::require_rank("transpose", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  auto r = detail::make("transpose", {cols, rows}, detail::transposed(x.values().data(), rows, cols));
  if (detail::recording({&x})) {
    detail::attach(r, [xn = x.node(), rows, cols](const std::vector<double>& g) {
      auto& dx = xn->grad_buffer();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) dx[i * cols + j] += g[j * rows + i];
    });
  }
  return r;
}

/// Columns [begin, end) of a matrix.
inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  detail::require_rank("slice_cols", x, 2);
  if (begin > end || end > x.dim(1))
    throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                     shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1), w = end - begin;
  std::vector<double> out(rows * w);
  const auto xv = x.values();
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(i * cols + begin), w,
                out.begin() + static_cast<std::ptrdiff_t>(i * w));
  auto r = detail::make("slice_cols", {rows, w}, std::move(out));
  if (detail::recording({&x})) {
    detail::attach(r, [xn = x.node(), rows, cols, begin, w](const std::vector<double>& g) {
      auto& dx = xn->grad_buffer();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < w; ++j) dx[i * cols + begin + j] += g[i * w + j];
    });
  }
  return r;
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) detail::shape_mismatch("reshape", x.shape(), shape);
  auto r = detail::make("reshape", std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
  if (detail::recording({&x})) {
    detail::attach(r, [xn = x.node()](const std::vector<double>& g) {
      auto& dx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
  }
  return r;
}

/// Label-smoothed negative log-likelihood over rows of [steps, vocab] logits:
///   (1 - eps) * NLL(target) + eps * mean_v NLL(v)
/// summed over non-ignored steps and divided by `normalizer`, which defaults
/// to the number of non-ignored steps (a plain mean).
inline Tensor label_smoothed_cross_entropy(const Tensor& logits, std::span<const int> targets, double epsilon,
                                           int ignore_index, double normalizer = 0.0) {
  detail::require_rank("label_smoothed_cross_entropy", logits, 2);
  const std::size_t steps = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != steps)
    throw ShapeError("label_smoothed_cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(logits.shape()));
  std::size_t counted = 0;
  for (int t : targets) {
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab)
      throw StructuralError("label_smoothed_cross_entropy: target " + std::to_string(t) + " outside vocab " +
                            std::to_string(vocab));
    ++counted;
  }
  if (counted == 0) throw StructuralError("label_smoothed_cross_entropy: every step is ignored");
  const double norm = normalizer > 0.0 ? normalizer : static_cast<double>(counted);
  const auto lv = logits.values();
  std::vector<double> probs(lv.size(), 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    if (targets[s] == ignore_index) continue;
    const double* row = lv.data() + s * vocab;
    double mx = row[0];
    for (std::size_t v = 1; v < vocab; ++v) mx = std::max(mx, row[v]);
    double se = 0.0, mean_logit = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) {
      const double e = std::exp(row[v] - mx);
      probs[s * vocab + v] = e;
      se += e;
      mean_logit += row[v];
    }
    mean_logit /= static_cast<double>(vocab);
    for (std::size_t v = 0; v < vocab; ++v) probs[s * vocab + v] /= se;
    const double lse = mx + std::log(se);
    const double nll_target = lse - row[targets[s]];
    const double nll_uniform = lse - mean_logit;
    total += (1.0 - epsilon) * nll_target + epsilon * nll_uniform;
  }
  auto r = detail::make("label_smoothed_cross_entropy", {1}, {total / norm});
  if (detail::recording({&logits})) {
    detail::attach(r, [ln = logits.node(), probs = std::move(probs), t = std::vector<int>(targets.begin(), targets.end()),
                       epsilon, ignore_index, norm, steps, vocab](const std::vector<double>& g) {
      auto& dl = ln->grad_buffer();
      const double scale_g = g[0] / norm;
      const double uniform = epsilon / static_cast<double>(vocab);
      for (std::size_t s = 0; s < steps; ++s) {
        if (t[s] == ignore_index) continue;
        for (std::size_t v = 0; v < vocab; ++v) {
          double q = uniform;
          if (static_cast<int>(v) == t[s]) q += 1.0 - epsilon;
          dl[s * vocab + v] += scale_g * (probs[s * vocab + v] - q);
        }
      }
    });
  }
  return r;
}

}  // namespace cocap::ad
