#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adgs2s/error.hpp"

namespace adgs2s::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A named trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while
/// the tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  inline const Matrix& value() const;
  inline Eigen::Index rows() const;
  inline Eigen::Index cols() const;
  inline double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records a computation for reverse-mode differentiation.
///
/// Every node stores its value and, when any input needs a gradient, a
/// closure that pushes the node's gradient back into its inputs. A tape
/// built with `record = false` keeps values only, for inference.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Matrix value) { return push(std::move(value), false, {}); }

  /// Leaf bound to a parameter; gradients flow into `p.grad`. Repeated
  /// calls for the same parameter return the same node.
  Var param(Parameter& p) {
    if (auto it = params_.find(&p); it != params_.end()) return Var(this, it->second);
    Parameter* ptr = &p;
    Var v = push(p.value, record_, [ptr](Tape&, const Matrix& g) { ptr->grad += g; });
    params_.emplace(&p, v.id());
    return v;
  }

  /// Row `r` of a parameter, as a column vector. Only that row receives
  /// gradient.
  Var row(Parameter& p, Eigen::Index r) {
    if (r < 0 || r >= p.value.rows())
      throw InvalidInput("row " + std::to_string(r) + " out of range for '" + p.name + "'");
    Parameter* ptr = &p;
    return push(p.value.row(r).transpose(), record_,
                [ptr, r](Tape&, const Matrix& g) { ptr->grad.row(r) += g.transpose(); });
  }

  /// Appends a node. `backward` is dropped when nothing upstream needs a
  /// gradient or the tape is not recording.
  Var push(Matrix value, bool needs_grad, Backward backward) {
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      if (!std::isfinite(value.data()[i])) {
        nonfinite_ = true;
        break;
      }
    }
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad && record_;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }

  /// Gradient buffer of a node, zero-initialised on first touch.
  Matrix& grad(Var v) {
    Node& n = nodes_[v.id()];
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void accumulate(Var v, const Matrix& g) {
    if (!nodes_[v.id()].needs_grad) return;
    grad(v) += g;
  }

  /// Seeds d(output)/d(output) = 1 for a 1x1 output and runs every closure
  /// in reverse creation order.
  void backward(Var output) {
    if (!record_) throw InvalidInput("backward on a non-recording tape");
    if (value(output).size() != 1) throw ShapeError("backward needs a scalar output");
    grad(output).setOnes();
    for (std::size_t i = output.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }

  /// Some recorded value was NaN or infinite.
  bool saw_nonfinite() const noexcept { return nonfinite_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool needs_grad = false;
  };

  bool record_;
  bool nonfinite_ = false;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> params_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }
inline Eigen::Index Var::rows() const { return value().rows(); }
inline Eigen::Index Var::cols() const { return value().cols(); }
inline double Var::scalar() const { return value()(0, 0); }

// ---------------------------------------------------------------------------
// Differentiable operations.
// ---------------------------------------------------------------------------

namespace detail {
inline Tape& tape_of(Var a) {
  if (!a.valid()) throw InvalidInput("operation on an empty Var");
  return *a.tape();
}
inline void same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " + std::to_string(b.rows()));
  return t.push(a.value() * b.value(), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.grad(a).noalias() += g * t.value(b).transpose();
    if (t.needs_grad(b)) t.grad(b).noalias() += t.value(a).transpose() * g;
  });
}

/// aᵀ·b
inline Var matmul_tn(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
  return t.push(a.value().transpose() * b.value(), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.grad(a).noalias() += t.value(b) * g.transpose();
    if (t.needs_grad(b)) t.grad(b).noalias() += t.value(a) * g;
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  detail::same_shape(a, b, "add");
  return t.push(a.value() + b.value(), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  detail::same_shape(a, b, "sub");
  return t.push(a.value() - b.value(), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

inline Var hadamard(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  detail::same_shape(a, b, "hadamard");
  return t.push(a.value().cwiseProduct(b.value()), t.needs_grad(a) || t.needs_grad(b),
                [a, b](Tape& t, const Matrix& g) {
                  if (t.needs_grad(a)) t.grad(a) += g.cwiseProduct(t.value(b));
                  if (t.needs_grad(b)) t.grad(b) += g.cwiseProduct(t.value(a));
                });
}

inline Var scale(Var a, double s) {
  Tape& t = detail::tape_of(a);
  return t.push(a.value() * s, t.needs_grad(a), [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

inline Var sigmoid(Var a) {
  Tape& t = detail::tape_of(a);
  Matrix y = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  Matrix dy = y.cwiseProduct((1.0 - y.array()).matrix());
  return t.push(std::move(y), t.needs_grad(a),
                [a, dy = std::move(dy)](Tape& t, const Matrix& g) { t.grad(a) += g.cwiseProduct(dy); });
}

inline Var tanh(Var a) {
  Tape& t = detail::tape_of(a);
  Matrix y = a.value().array().tanh().matrix();
  Matrix dy = (1.0 - y.array().square()).matrix();
  return t.push(std::move(y), t.needs_grad(a),
                [a, dy = std::move(dy)](Tape& t, const Matrix& g) { t.grad(a) += g.cwiseProduct(dy); });
}

inline Var relu(Var a) {
  Tape& t = detail::tape_of(a);
  Matrix y = a.value().cwiseMax(0.0);
  return t.push(std::move(y), t.needs_grad(a), [a](Tape& t, const Matrix& g) {
    t.grad(a) += (t.value(a).array() > 0.0).select(g, 0.0).matrix();
  });
}

/// Vertical concatenation of column blocks.
inline Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidInput("concat of nothing");
  Tape& t = detail::tape_of(parts[0]);
  const auto cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool needs = false;
  for (Var p : parts) {
    if (p.cols() != cols) throw ShapeError("concat: column counts differ");
    rows += p.rows();
    needs = needs || t.needs_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.push(std::move(out), needs, [saved = std::move(saved)](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (Var p : saved) {
      const auto r = t.value(p).rows();
      if (t.needs_grad(p)) t.grad(p) += g.middleRows(at, r);
      at += r;
    }
  });
}

inline Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

/// Rows [start, start + count).
inline Var slice(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = detail::tape_of(a);
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice out of range");
  return t.push(a.value().middleRows(start, count), t.needs_grad(a), [a, start, count](Tape& t, const Matrix& g) {
    t.grad(a).middleRows(start, count) += g;
  });
}

/// Columns side by side: k column vectors of height d become a d×k matrix.
inline Var hstack(std::span<const Var> cols) {
  if (cols.empty()) throw InvalidInput("hstack of nothing");
  Tape& t = detail::tape_of(cols[0]);
  const auto d = cols[0].rows();
  Matrix out(d, static_cast<Eigen::Index>(cols.size()));
  bool needs = false;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i].rows() != d || cols[i].cols() != 1) throw ShapeError("hstack: expects equal-height column vectors");
    out.col(static_cast<Eigen::Index>(i)) = cols[i].value();
    needs = needs || t.needs_grad(cols[i]);
  }
  std::vector<Var> saved(cols.begin(), cols.end());
  return t.push(std::move(out), needs, [saved = std::move(saved)](Tape& t, const Matrix& g) {
    for (std::size_t i = 0; i < saved.size(); ++i)
      if (t.needs_grad(saved[i])) t.grad(saved[i]) += g.col(static_cast<Eigen::Index>(i));
  });
}

/// Zero-extends a column vector to `rows` rows.
inline Var pad_rows(Var a, Eigen::Index rows) {
  Tape& t = detail::tape_of(a);
  if (rows < a.rows()) throw ShapeError("pad_rows: target shorter than input");
  if (rows == a.rows()) return a;
  Matrix out = Matrix::Zero(rows, a.cols());
  out.topRows(a.rows()) = a.value();
  const auto n = a.rows();
  return t.push(std::move(out), t.needs_grad(a), [a, n](Tape& t, const Matrix& g) { t.grad(a) += g.topRows(n); });
}

/// Elementwise arithmetic mean of equally shaped values.
inline Var mean(std::span<const Var> xs) {
  if (xs.empty()) throw InvalidInput("mean of an empty set");
  Tape& t = detail::tape_of(xs[0]);
  Matrix out = xs[0].value();
  bool needs = t.needs_grad(xs[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    detail::same_shape(xs[0], xs[i], "mean");
    out += xs[i].value();
    needs = needs || t.needs_grad(xs[i]);
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  out *= inv;
  std::vector<Var> saved(xs.begin(), xs.end());
  return t.push(std::move(out), needs, [saved = std::move(saved), inv](Tape& t, const Matrix& g) {
    for (Var x : saved) t.accumulate(x, g * inv);
  });
}

/// Elementwise maximum; ties route the gradient to the earliest argument.
inline Var max_pool(std::span<const Var> xs) {
  if (xs.empty()) throw InvalidInput("max_pool of an empty set");
  Tape& t = detail::tape_of(xs[0]);
  Matrix out = xs[0].value();
  std::vector<std::size_t> arg(static_cast<std::size_t>(out.size()), 0);
  bool needs = t.needs_grad(xs[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    detail::same_shape(xs[0], xs[i], "max_pool");
    const Matrix& v = xs[i].value();
    for (Eigen::Index k = 0; k < out.size(); ++k) {
      if (v.data()[k] > out.data()[k]) {
        out.data()[k] = v.data()[k];
        arg[static_cast<std::size_t>(k)] = i;
      }
    }
    needs = needs || t.needs_grad(xs[i]);
  }
  std::vector<Var> saved(xs.begin(), xs.end());
  return t.push(std::move(out), needs, [saved = std::move(saved), arg = std::move(arg)](Tape& t, const Matrix& g) {
    for (std::size_t k = 0; k < arg.size(); ++k) {
      Var src = saved[arg[k]];
      if (t.needs_grad(src)) t.grad(src).data()[k] += g.data()[k];
    }
  });
}

/// Sum of 1x1 values.
inline Var sum(std::span<const Var> xs) {
  if (xs.empty()) throw InvalidInput("sum of nothing");
  Tape& t = detail::tape_of(xs[0]);
  double s = 0.0;
  bool needs = false;
  for (Var x : xs) {
    if (x.value().size() != 1) throw ShapeError("sum expects scalars");
    s += x.scalar();
    needs = needs || t.needs_grad(x);
  }
  std::vector<Var> saved(xs.begin(), xs.end());
  return t.push(Matrix::Constant(1, 1, s), needs, [saved = std::move(saved)](Tape& t, const Matrix& g) {
    for (Var x : saved) t.accumulate(x, g);
  });
}

/// Numerically stabilised softmax of a column vector.
inline Vector softmax_values(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

inline Vector log_softmax_values(const Vector& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

inline Var softmax(Var a) {
  Tape& t = detail::tape_of(a);
  if (a.cols() != 1) throw ShapeError("softmax expects a column vector");
  Vector y = softmax_values(a.value());
  Vector saved = y;
  return t.push(std::move(y), t.needs_grad(a), [a, y = std::move(saved)](Tape& t, const Matrix& g) {
    const double dot = g.col(0).dot(y);
    t.grad(a) += (y.array() * (g.col(0).array() - dot)).matrix();
  });
}

/// -log softmax(logits)[target], gradient p - onehot(target).
inline Var softmax_cross_entropy(Var logits, Eigen::Index target) {
  Tape& t = detail::tape_of(logits);
  if (logits.cols() != 1 || logits.rows() < 1) throw ShapeError("cross entropy expects a non-empty column vector");
  if (target < 0 || target >= logits.rows())
    throw InvalidInput("target " + std::to_string(target) + " out of range for " + std::to_string(logits.rows()) +
                       " classes");
  const Vector lsm = log_softmax_values(logits.value());
  return t.push(Matrix::Constant(1, 1, -lsm(target)), t.needs_grad(logits),
                [logits, target, lsm](Tape& t, const Matrix& g) {
                  Vector p = lsm.array().exp().matrix();
                  p(target) -= 1.0;
                  t.grad(logits) += p * g(0, 0);
                });
}

}  // namespace adgs2s::nn
