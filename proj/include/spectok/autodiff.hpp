#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spectok/errors.hpp"
#include "spectok/random.hpp"
#include "spectok/tensor.hpp"

namespace spectok {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode gradient tape. Nodes are appended in evaluation order, so every
/// node's parents precede it and backward is a single reverse sweep. Node
/// storage never relocates, so `Var::value()` references stay valid.
///
/// Leaves created with `param()` are bound to caller-owned tensors. `backward()`
/// sums the gradient of every binding per tensor and adds it to `Tensor::grad`,
/// so parameter gradients accumulate across calls until zeroed.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, {}, false, {}});
    return Var{this, nodes_.size() - 1};
  }

  Var param(Tensor& bound) {
    nodes_.push_back(Node{Tensor{}, &bound, {}, {}, true, {}});
    return Var{this, nodes_.size() - 1};
  }

  /// Records an operation result. The node requires grad iff any parent does;
  /// otherwise `fn` is dropped.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn) {
    bool needs = false;
    for (auto p : parents) needs = needs || nodes_[p].requires_grad;
    Node node{std::move(value), nullptr, std::move(parents), {}, needs, {}};
    if (needs) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.bound ? *n.bound : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }

  /// Gradient buffer of a node, zero-initialized on first access.
  std::span<double> grad(std::size_t id) {
    Node& n = nodes_[id];
    const std::size_t len = value(id).size();
    if (n.grad.size() != len) n.grad.assign(len, 0.0);
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  /// Propagates d(loss)/d(node) to every node. With `flush` the per-tensor sums
  /// are added to the bound tensors immediately; otherwise they wait in
  /// `pending_grads()` until `flush_grads()`.
  void backward(Var loss, bool flush = true) {
    if (loss.tape != this) throw ContractError("backward: loss is not recorded on this tape");
    if (value(loss.id).size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_string(value(loss.id).shape()));
    }
    grad(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
    }
    pending_.clear();
    for (std::size_t i = 0; i <= loss.id; ++i) {
      Node& n = nodes_[i];
      if (!n.bound || n.grad.empty()) continue;
      std::vector<double>* acc = nullptr;
      for (auto& [t, g] : pending_) {
        if (t == n.bound) acc = &g;
      }
      if (!acc) {
        pending_.emplace_back(n.bound, std::vector<double>(n.grad.size(), 0.0));
        acc = &pending_.back().second;
      }
      for (std::size_t k = 0; k < n.grad.size(); ++k) (*acc)[k] += n.grad[k];
    }
    if (flush) flush_grads();
  }

  const std::vector<std::pair<Tensor*, std::vector<double>>>& pending_grads() const { return pending_; }

  void flush_grads() {
    for (auto& [t, g] : pending_) {
      t->ensure_grad();
      auto dst = t->grad();
      for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
    }
    pending_.clear();
  }

  /// Running hash of which side of a kink every piecewise op input fell on.
  /// Two evaluations with equal signatures took the same linear pieces.
  std::uint64_t kink_signature() const noexcept { return kink_signature_; }
  void note_kink(double x) noexcept {
    kink_signature_ = (kink_signature_ ^ (x > 0.0 ? 0x9e3779b97f4a7c15ULL : 0x632be59bd9b4e019ULL)) *
                      0x100000001b3ULL;
  }

 private:
  struct Node {
    Tensor value;
    Tensor* bound;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad;
    std::vector<double> grad;
  };

  std::deque<Node> nodes_;
  std::vector<std::pair<Tensor*, std::vector<double>>> pending_;
  std::uint64_t kink_signature_ = 0xcbf29ce484222325ULL;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

inline void require_same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw ContractError("operands recorded on different tapes");
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

inline void require_matrix(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

// Decomposes a shape around `axis` as [outer, n, inner].
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

inline void accumulate(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Records y = f(x) elementwise with dy/dx = df(x, y).
template <class F, class DF>
Var unary(Var x, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return x.tape->record(std::move(out), {x.id}, [df](Tape& t, std::size_t self) {
    const std::size_t xi = t.parents(self)[0];
    const Tensor& xv = t.value(xi);
    const Tensor& yv = t.value(self);
    auto g = t.grad(self);
    auto gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
}

}  // namespace detail

/// a[m×k] · b[k×n].
inline Var matmul(Var a, Var b) {
  detail::require_same_tape(a, b);
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.storage().data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.storage().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return a.tape->record(std::move(out), {a.id, b.id}, [m, k, n](Tape& t, std::size_t self) {
    const std::size_t ai = t.parents(self)[0], bi = t.parents(self)[1];
    const auto g = t.grad(self);
    if (t.requires_grad(ai)) {
      // dA = G · Bᵀ
      const Tensor& bv = t.value(bi);
      auto ga = t.grad(ai);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += s;
        }
      }
    }
    if (t.requires_grad(bi)) {
      // dB = Aᵀ · G
      const Tensor& av = t.value(ai);
      auto gb = t.grad(bi);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      }
    }
  });
}

inline Var transpose(Var a) {
  detail::require_matrix(a, "transpose");
  const Tensor& av = a.value();
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return a.tape->record(std::move(out), {a.id}, [r, c](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto ga = t.grad(t.parents(self)[0]);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

inline Var reshape(Var a, Shape shape) {
  if (shape_size(shape) != a.value().size()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  Tensor out(std::move(shape), a.value().storage());
  return a.tape->record(std::move(out), {a.id}, [](Tape& t, std::size_t self) {
    detail::accumulate(t.grad(t.parents(self)[0]), t.grad(self));
  });
}

inline Var add(Var a, Var b) {
  detail::require_same_shape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    for (auto p : t.parents(self)) {
      if (t.requires_grad(p)) detail::accumulate(t.grad(p), g);
    }
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape(a, b, "sub");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const std::size_t ai = t.parents(self)[0], bi = t.parents(self)[1];
    if (t.requires_grad(ai)) detail::accumulate(t.grad(ai), g);
    if (t.requires_grad(bi)) {
      auto gb = t.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Hadamard product.
inline Var mul(Var a, Var b) {
  detail::require_same_shape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const std::size_t ai = t.parents(self)[0], bi = t.parents(self)[1];
    if (t.requires_grad(ai)) {
      const Tensor& bv = t.value(bi);
      auto ga = t.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bi)) {
      const Tensor& av = t.value(ai);
      auto gb = t.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(Var a, double c) {
  return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

/// a * s for a single-element tensor `s`.
inline Var scale_by(Var a, Var s) {
  detail::require_same_tape(a, s);
  if (s.value().size() != 1) throw DimensionError("scale_by: scale must have one element");
  const Tensor& av = a.value();
  const double c = s.value()[0];
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = c * av[i];
  return a.tape->record(std::move(out), {a.id, s.id}, [](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const std::size_t ai = t.parents(self)[0], si = t.parents(self)[1];
    const Tensor& av = t.value(ai);
    if (t.requires_grad(ai)) {
      const double c = t.value(si)[0];
      auto ga = t.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    }
    if (t.requires_grad(si)) {
      double s = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * av[i];
      t.grad(si)[0] += s;
    }
  });
}

/// x[...×d] + b[d], broadcasting the bias over leading axes.
inline Var add_bias(Var x, Var b) {
  detail::require_same_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  const std::size_t d = bv.size();
  if (bv.rank() != 1 || xv.rank() == 0 || xv.shape().back() != d) {
    throw DimensionError("add_bias: " + shape_string(xv.shape()) + " + " + shape_string(bv.shape()));
  }
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + bv[i % d];
  return x.tape->record(std::move(out), {x.id, b.id}, [d](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const std::size_t xi = t.parents(self)[0], bi = t.parents(self)[1];
    if (t.requires_grad(xi)) detail::accumulate(t.grad(xi), g);
    if (t.requires_grad(bi)) {
      auto gb = t.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
    }
  });
}

inline Var relu(Var x) {
  Tape* tape = x.tape;
  for (double v : x.value().data()) tape->note_kink(v);
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline constexpr double kLeakySlope = 0.01;

inline Var leaky_relu(Var x, double slope = kLeakySlope) {
  Tape* tape = x.tape;
  for (double v : x.value().data()) tape->note_kink(v);
  return detail::unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

/// Exact (erf-based) GELU.
inline Var gelu(Var x) {
  return detail::unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      });
}

inline Var exp(Var x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

/// Softmax over `axis`, max-subtracted.
inline Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const auto s = detail::split_axis(xv.shape(), axis);
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      double mx = xv[base];
      for (std::size_t i = 1; i < s.n; ++i) mx = std::max(mx, xv[base + i * s.inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) {
        const double e = std::exp(xv[base + i * s.inner] - mx);
        out[base + i * s.inner] = e;
        z += e;
      }
      for (std::size_t i = 0; i < s.n; ++i) out[base + i * s.inner] /= z;
    }
  }
  return x.tape->record(std::move(out), {x.id}, [s](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const auto g = t.grad(self);
    auto gx = t.grad(t.parents(self)[0]);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.n * s.inner + in;
        double dot = 0.0;
        for (std::size_t i = 0; i < s.n; ++i) dot += g[base + i * s.inner] * y[base + i * s.inner];
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t k = base + i * s.inner;
          gx[k] += y[k] * (g[k] - dot);
        }
      }
    }
  });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes the last axis to zero mean / unit variance, then gamma ⊙ x̂ + beta.
/// Constant rows normalize to zeros.
inline Var layer_norm(Var x, Var gamma, Var beta, double eps = kLayerNormEps) {
  detail::require_same_tape(x, gamma);
  detail::require_same_tape(x, beta);
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw DimensionError("layer_norm: affine parameters must have length " + std::to_string(d));
  }
  const std::size_t rows = xv.size() / d;
  Tensor out(xv.shape());
  std::vector<double> xhat(xv.size()), inv_std(rows);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xv[r * d + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv[r * d + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xv[r * d + j] - mean) * inv_std[r];
      xhat[r * d + j] = h;
      out[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return x.tape->record(
      std::move(out), {x.id, gamma.id, beta.id},
      [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        const auto& ps = t.parents(self);
        const Tensor& gv = t.value(ps[1]);
        if (t.requires_grad(ps[1])) {
          auto gg = t.grad(ps[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (t.requires_grad(ps[2])) {
          auto gb = t.grad(ps[2]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
        }
        if (t.requires_grad(ps[0])) {
          auto gx = t.grad(ps[0]);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[r * d + j] * gv[j];
              sum_dh += dh;
              sum_dh_h += dh * xhat[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[r * d + j] * gv[j];
              gx[r * d + j] += inv_std[r] * (dh - inv_d * sum_dh - xhat[r * d + j] * inv_d * sum_dh_h);
            }
          }
        }
      });
}

/// Inverted dropout. Identity when `train` is false or `rate` is 0.
inline Var dropout(Var x, double rate, bool train, Rng& rng) {
  if (!train || rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout: rate must be < 1");
  const Tensor& xv = x.value();
  const double keep = 1.0 - rate;
  std::vector<double> mask(xv.size());
  for (auto& m : mask) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * mask[i];
  return x.tape->record(std::move(out), {x.id}, [mask = std::move(mask)](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto gx = t.grad(t.parents(self)[0]);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

/// Concatenation along `axis`; all other extents must agree.
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  Tape* tape = parts.front().tape;
  Shape shape = parts.front().shape();
  if (axis >= shape.size()) throw DimensionError("concat: axis out of range");
  std::size_t total = 0;
  for (const Var& p : parts) {
    detail::require_same_tape(parts.front(), p);
    Shape s = p.shape();
    if (s.size() != shape.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != shape[i]) {
        throw DimensionError("concat: extent mismatch " + shape_string(s) + " vs " + shape_string(shape));
      }
    }
    total += s[axis];
  }
  shape[axis] = total;
  const auto split = detail::split_axis(shape, axis);
  Tensor out(shape);
  std::vector<std::size_t> parents, offsets, extents;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    const std::size_t n = pv.dim(axis);
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(&pv.storage()[o * n * split.inner], n * split.inner,
                  &out.storage()[(o * total + off) * split.inner]);
    }
    parents.push_back(p.id);
    offsets.push_back(off);
    extents.push_back(n);
    off += n;
  }
  return tape->record(
      std::move(out), std::move(parents),
      [split, total, offsets = std::move(offsets), extents = std::move(extents)](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        const auto& ps = t.parents(self);
        for (std::size_t k = 0; k < ps.size(); ++k) {
          if (!t.requires_grad(ps[k])) continue;
          const std::size_t n = extents[k];
          auto gp = t.grad(ps[k]);
          for (std::size_t o = 0; o < split.outer; ++o) {
            const std::size_t src = (o * total + offsets[k]) * split.inner;
            for (std::size_t i = 0; i < n * split.inner; ++i) gp[o * n * split.inner + i] += g[src + i];
          }
        }
      });
}

/// Contiguous sub-range [start, start+len) along `axis`.
inline Var slice(Var x, std::size_t axis, std::size_t start, std::size_t len) {
  const Tensor& xv = x.value();
  const auto s = detail::split_axis(xv.shape(), axis);
  if (start + len > s.n) throw DimensionError("slice: range exceeds extent of " + shape_string(xv.shape()));
  Shape shape = xv.shape();
  shape[axis] = len;
  Tensor out(shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(&xv.storage()[(o * s.n + start) * s.inner], len * s.inner, &out.storage()[o * len * s.inner]);
  }
  return x.tape->record(std::move(out), {x.id}, [s, start, len](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto gx = t.grad(t.parents(self)[0]);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < len * s.inner; ++i) gx[(o * s.n + start) * s.inner + i] += g[o * len * s.inner + i];
    }
  });
}

/// Rows of `table` selected by `index` (embedding lookup).
inline Var gather_rows(Var table, std::vector<std::size_t> index) {
  detail::require_matrix(table, "gather_rows");
  const Tensor& tv = table.value();
  const std::size_t d = tv.dim(1);
  Tensor out(Shape{index.size(), d});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= tv.dim(0)) {
      throw VocabularyError("gather_rows: index " + std::to_string(index[r]) + " outside table of " +
                            std::to_string(tv.dim(0)) + " rows");
    }
    std::copy_n(&tv.storage()[index[r] * d], d, &out.storage()[r * d]);
  }
  return table.tape->record(std::move(out), {table.id}, [d, index = std::move(index)](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto gt = t.grad(t.parents(self)[0]);
    for (std::size_t r = 0; r < index.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) gt[index[r] * d + j] += g[r * d + j];
  });
}

/// out[index[r]] += src[r], producing `rows` rows.
inline Var scatter_add_rows(Var src, std::vector<std::size_t> index, std::size_t rows) {
  detail::require_matrix(src, "scatter_add_rows");
  const Tensor& sv = src.value();
  if (index.size() != sv.dim(0)) throw DimensionError("scatter_add_rows: index length disagrees with rows");
  const std::size_t d = sv.dim(1);
  Tensor out(Shape{rows, d});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= rows) throw DimensionError("scatter_add_rows: target row out of range");
    for (std::size_t j = 0; j < d; ++j) out[index[r] * d + j] += sv[r * d + j];
  }
  return src.tape->record(std::move(out), {src.id}, [d, index = std::move(index)](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto gs = t.grad(t.parents(self)[0]);
    for (std::size_t r = 0; r < index.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) gs[r * d + j] += g[index[r] * d + j];
  });
}

/// Sum of all elements as a scalar.
inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape->record(Tensor::scalar(s), {x.id}, [](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(t.parents(self)[0])) v += g;
  });
}

inline Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

/// x[n×in] · w[in×out] + b[out].
inline Var linear(Var x, Var w, Var b) { return add_bias(matmul(x, w), b); }

}  // namespace spectok
