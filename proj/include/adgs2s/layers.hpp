#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "adgs2s/autodiff.hpp"
#include "adgs2s/random.hpp"

namespace adgs2s::nn {

/// Uniform on ±sqrt(6 / (rows + cols)).
inline Matrix glorot_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  if (rows <= 0 || cols <= 0) throw InvalidInput("glorot_init: dimensions must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

// ---------------------------------------------------------------------------
// LSTM cell
// ---------------------------------------------------------------------------

/// Gate weights stacked as [i; f; o; c̃], each block hidden × (hidden + input),
/// applied to [h_prev; x].
struct LstmParams {
  Parameter weight;
  Parameter bias;
  Eigen::Index input_dim = 0;
  Eigen::Index hidden_dim = 0;

  LstmParams() = default;
  LstmParams(const std::string& name, Eigen::Index input, Eigen::Index hidden, Rng& rng)
      : weight(name + ".weight", glorot_init(4 * hidden, hidden + input, rng)),
        bias(name + ".bias", Matrix::Zero(4 * hidden, 1)),
        input_dim(input),
        hidden_dim(hidden) {}

  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

struct LstmOutput {
  Var h;
  Var c;
};

/// One LSTM step with a hand-written backward pass.
inline LstmOutput lstm_cell(LstmParams& p, Var x, Var h_prev, Var c_prev) {
  Tape& t = *x.tape();
  const Eigen::Index H = p.hidden_dim;
  if (x.rows() != p.input_dim || x.cols() != 1 || h_prev.rows() != H || c_prev.rows() != H || h_prev.cols() != 1 ||
      c_prev.cols() != 1)
    throw ShapeError("lstm_cell: expected x " + std::to_string(p.input_dim) + ", h/c " + std::to_string(H) +
                     "; got x " + std::to_string(x.rows()) + ", h " + std::to_string(h_prev.rows()) + ", c " +
                     std::to_string(c_prev.rows()));
  Var w = t.param(p.weight);
  Var b = t.param(p.bias);

  Vector in(H + p.input_dim);
  in << h_prev.value(), x.value();
  Vector z = w.value() * in + b.value();
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Vector i = z.segment(0, H).unaryExpr(sig);
  Vector f = z.segment(H, H).unaryExpr(sig);
  Vector o = z.segment(2 * H, H).unaryExpr(sig);
  Vector g = z.segment(3 * H, H).array().tanh().matrix();
  Vector c = f.cwiseProduct(c_prev.value()) + i.cwiseProduct(g);
  Vector tc = c.array().tanh().matrix();
  Vector h = o.cwiseProduct(tc);

  Vector packed(2 * H);
  packed << h, c;
  const bool needs = t.needs_grad(x) || t.needs_grad(h_prev) || t.needs_grad(c_prev) || t.needs_grad(w) ||
                     t.needs_grad(b);
  Var out = t.push(std::move(packed), needs,
                   [w, b, x, h_prev, c_prev, H, i, f, o, g, tc, in = std::move(in), cp = Vector(c_prev.value())](Tape& t, const Matrix& grad) {
                     const Vector dh = grad.col(0).head(H);
                     const Vector dc_in = grad.col(0).tail(H);
                     const Vector dout = dh.cwiseProduct(tc);
                     const Vector dc = dc_in + dh.cwiseProduct(o).cwiseProduct((1.0 - tc.array().square()).matrix());
                     Vector dz(4 * H);
                     dz.segment(0, H) = dc.cwiseProduct(g).cwiseProduct(i.cwiseProduct((1.0 - i.array()).matrix()));
                     dz.segment(H, H) = dc.cwiseProduct(cp).cwiseProduct(f.cwiseProduct((1.0 - f.array()).matrix()));
                     dz.segment(2 * H, H) = dout.cwiseProduct(o.cwiseProduct((1.0 - o.array()).matrix()));
                     dz.segment(3 * H, H) = dc.cwiseProduct(i).cwiseProduct((1.0 - g.array().square()).matrix());
                     if (t.needs_grad(w)) t.grad(w).noalias() += dz * in.transpose();
                     if (t.needs_grad(b)) t.grad(b) += dz;
                     if (t.needs_grad(h_prev) || t.needs_grad(x)) {
                       const Vector din = t.value(w).transpose() * dz;
                       t.accumulate(h_prev, din.head(H));
                       t.accumulate(x, din.tail(din.size() - H));
                     }
                     t.accumulate(c_prev, dc.cwiseProduct(f));
                   });
  return {slice(out, 0, H), slice(out, H, H)};
}

// ---------------------------------------------------------------------------
// Windowed ReLU feature stack
// ---------------------------------------------------------------------------

/// L layers; layer l maps position t to ReLU(W_l · [x_{t-s}; ...; x_{t+s}])
/// over layer l-1, zero-padding outside the sequence. Width is preserved.
struct WindowStack {
  std::vector<Parameter> layers;
  int window = 1;
  Eigen::Index dim = 0;

  WindowStack() = default;
  WindowStack(const std::string& name, Eigen::Index d, int layer_count, int half_window, Rng& rng)
      : window(half_window), dim(d) {
    if (layer_count < 0 || half_window < 0) throw InvalidInput("window stack: L and s must be non-negative");
    for (int l = 0; l < layer_count; ++l)
      layers.emplace_back(name + ".layer" + std::to_string(l), glorot_init(d, (2 * half_window + 1) * d, rng));
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& p : layers) out.push_back(&p);
    return out;
  }
};

inline std::vector<Var> window_relu_stack(WindowStack& stack, std::vector<Var> seq) {
  if (seq.empty()) return seq;
  Tape& t = *seq[0].tape();
  for (const Var& v : seq)
    if (v.rows() != stack.dim || v.cols() != 1) throw ShapeError("window stack: input width mismatch");
  const Var zero = t.constant(Matrix::Zero(stack.dim, 1));
  const auto T = static_cast<long>(seq.size());
  for (auto& layer : stack.layers) {
    Var w = t.param(layer);
    std::vector<Var> next;
    next.reserve(seq.size());
    std::vector<Var> window;
    for (long pos = 0; pos < T; ++pos) {
      window.clear();
      for (long k = pos - stack.window; k <= pos + stack.window; ++k)
        window.push_back(k < 0 || k >= T ? zero : seq[static_cast<std::size_t>(k)]);
      next.push_back(relu(matmul(w, concat(window))));
    }
    seq = std::move(next);
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Multiplicative attention
// ---------------------------------------------------------------------------

struct AttentionOutput {
  Var weights;  // T×1
  Var context;  // d_enc×1
};

/// u_t = h_t · (W s), α = softmax(u), c = Σ α_t h_t. `states` is the d×T
/// matrix of encoder states.
inline AttentionOutput attention(Var states, Var s, Var w) {
  if (states.cols() < 1) throw InvalidInput("attention over zero encoder states");
  if (w.rows() != states.rows() || w.cols() != s.rows())
    throw ShapeError("attention: W must be " + std::to_string(states.rows()) + "x" + std::to_string(s.rows()));
  Var scores = matmul_tn(states, matmul(w, s));
  Var alpha = softmax(scores);
  return {alpha, matmul(states, alpha)};
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

enum class Mode { Train, Eval };

/// Inverted dropout: survivors are scaled by 1/(1-p) so evaluation is the
/// identity.
inline Var dropout(Var a, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidInput("dropout probability must lie in [0, 1)");
  if (mode == Mode::Eval || p == 0.0) return a;
  Matrix mask(a.rows(), a.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.bernoulli(p) ? 0.0 : keep;
  return hadamard(a, a.tape()->constant(std::move(mask)));
}

// ---------------------------------------------------------------------------
// Optimisation
// ---------------------------------------------------------------------------

/// d_model^-0.5 · min(step^-0.5, step · warmup^-1.5)
inline double lrate(double step_num, double d_model, double warmup_steps) {
  if (!(step_num >= 1.0)) throw InvalidInput("lrate: step_num must be >= 1");
  if (!(d_model > 0.0) || !(warmup_steps > 0.0)) throw InvalidInput("lrate: d_model and warmup_steps must be positive");
  return std::pow(d_model, -0.5) * std::min(std::pow(step_num, -0.5), step_num * std::pow(warmup_steps, -1.5));
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double d_model = 256;
  double warmup_steps = 4000;
  /// Multiplier on the warmup schedule.
  double scale = 1.0;
};

/// Bias-corrected Adam whose step size follows `lrate`.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    for (auto* p : params_) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  /// Applies one update from the accumulated gradients; returns the
  /// learning rate used.
  double step() {
    ++step_;
    const double lr = config_.scale * lrate(static_cast<double>(step_), config_.d_model, config_.warmup_steps);
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter& p = *params_[k];
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
        throw ShapeError("adam: gradient shape differs from '" + p.name + "'");
      m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * p.grad;
      v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + config_.epsilon);
    }
    return lr;
  }

  std::size_t steps() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t step_ = 0;
};

}  // namespace adgs2s::nn
