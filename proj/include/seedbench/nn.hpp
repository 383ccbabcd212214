#pragma once

// Fixed two-hidden-layer MLP (ReLU, width 64) with a heteroscedastic Gaussian
// head, analytic backpropagation and Adam. Everything is templated on the
// scalar type; the experiment pipeline instantiates double.

#include "seedbench/seeding.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace seedbench::nn {

inline constexpr Eigen::Index kHidden = 64;
inline constexpr double kVarMin = 1e-3;
inline constexpr double kVarMax = 1e3;

/// Non-finite value inside the network. The message names the layer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// All weights live in one flat vector; the named blocks are Eigen::Map views
/// into it. Layout: W1 (64 x d), b1, W2 (64 x 64), b2, W3 (2 x 64), b3 where
/// row 0 of the head is the mean and row 1 the raw log-variance.
template <typename Scalar>
class MLPParams {
 public:
  using MatMap = Eigen::Map<Mat<Scalar>>;
  using ConstMatMap = Eigen::Map<const Mat<Scalar>>;
  using VecMap = Eigen::Map<Vec<Scalar>>;
  using ConstVecMap = Eigen::Map<const Vec<Scalar>>;

  MLPParams() = default;
  explicit MLPParams(Eigen::Index input_dim)
      : d_(input_dim), flat_(Vec<Scalar>::Zero(size_for(input_dim))) {}
  MLPParams(Eigen::Index input_dim, Vec<Scalar> flat) : d_(input_dim), flat_(std::move(flat)) {
    if (flat_.size() != size_for(d_)) throw std::invalid_argument("MLPParams: flat size mismatch");
  }

  static constexpr Eigen::Index size_for(Eigen::Index d) {
    return kHidden * d + kHidden + kHidden * kHidden + kHidden + 2 * kHidden + 2;
  }

  Eigen::Index input_dim() const { return d_; }
  Eigen::Index size() const { return flat_.size(); }
  Vec<Scalar>& flat() { return flat_; }
  const Vec<Scalar>& flat() const { return flat_; }

  MatMap W1() { return MatMap(flat_.data() + off_W1(), kHidden, d_); }
  ConstMatMap W1() const { return ConstMatMap(flat_.data() + off_W1(), kHidden, d_); }
  VecMap b1() { return VecMap(flat_.data() + off_b1(), kHidden); }
  ConstVecMap b1() const { return ConstVecMap(flat_.data() + off_b1(), kHidden); }
  MatMap W2() { return MatMap(flat_.data() + off_W2(), kHidden, kHidden); }
  ConstMatMap W2() const { return ConstMatMap(flat_.data() + off_W2(), kHidden, kHidden); }
  VecMap b2() { return VecMap(flat_.data() + off_b2(), kHidden); }
  ConstVecMap b2() const { return ConstVecMap(flat_.data() + off_b2(), kHidden); }
  MatMap W3() { return MatMap(flat_.data() + off_W3(), 2, kHidden); }
  ConstMatMap W3() const { return ConstMatMap(flat_.data() + off_W3(), 2, kHidden); }
  VecMap b3() { return VecMap(flat_.data() + off_b3(), 2); }
  ConstVecMap b3() const { return ConstVecMap(flat_.data() + off_b3(), 2); }

  bool operator==(const MLPParams& o) const { return d_ == o.d_ && flat_ == o.flat_; }

 private:
  Eigen::Index off_W1() const { return 0; }
  Eigen::Index off_b1() const { return kHidden * d_; }
  Eigen::Index off_W2() const { return off_b1() + kHidden; }
  Eigen::Index off_b2() const { return off_W2() + kHidden * kHidden; }
  Eigen::Index off_W3() const { return off_b2() + kHidden; }
  Eigen::Index off_b3() const { return off_W3() + 2 * kHidden; }

  Eigen::Index d_ = 0;
  Vec<Scalar> flat_;
};

template <typename Scalar>
struct GaussianPrediction {
  Scalar mu{};
  Scalar var{1};
};

/// One keep-mask per hidden layer, shared by every example it is applied to.
/// Entries are 0 or 1/(1-rate).
template <typename Scalar>
struct DropoutMask {
  Vec<Scalar> layer1;
  Vec<Scalar> layer2;
  double rate = 0.0;
};

/// Per-example masks (kHidden x batch), used while training with dropout.
template <typename Scalar>
struct BatchMask {
  Mat<Scalar> layer1;
  Mat<Scalar> layer2;
};

struct NoMask {};

template <typename Scalar>
DropoutMask<Scalar> make_dropout_mask(double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  Rng rng(seed);
  std::bernoulli_distribution keep(1.0 - rate);
  const Scalar scale = Scalar(1) / Scalar(1.0 - rate);
  DropoutMask<Scalar> m;
  m.rate = rate;
  m.layer1.resize(kHidden);
  m.layer2.resize(kHidden);
  for (Eigen::Index i = 0; i < kHidden; ++i) m.layer1(i) = keep(rng) ? scale : Scalar(0);
  for (Eigen::Index i = 0; i < kHidden; ++i) m.layer2(i) = keep(rng) ? scale : Scalar(0);
  return m;
}

template <typename Scalar>
BatchMask<Scalar> make_batch_mask(double rate, Eigen::Index batch, Rng& rng) {
  std::bernoulli_distribution keep(1.0 - rate);
  const Scalar scale = Scalar(1) / Scalar(1.0 - rate);
  BatchMask<Scalar> m;
  m.layer1.resize(kHidden, batch);
  m.layer2.resize(kHidden, batch);
  for (Eigen::Index i = 0; i < m.layer1.size(); ++i) m.layer1.data()[i] = keep(rng) ? scale : Scalar(0);
  for (Eigen::Index i = 0; i < m.layer2.size(); ++i) m.layer2.data()[i] = keep(rng) ? scale : Scalar(0);
  return m;
}

namespace detail {

template <typename Derived>
void apply_mask(Eigen::MatrixBase<Derived>&, const NoMask&, int) {}

template <typename Derived, typename Scalar>
void apply_mask(Eigen::MatrixBase<Derived>& h, const DropoutMask<Scalar>& m, int layer) {
  h.array().colwise() *= (layer == 1 ? m.layer1 : m.layer2).array();
}

template <typename Derived, typename Scalar>
void apply_mask(Eigen::MatrixBase<Derived>& h, const BatchMask<Scalar>& m, int layer) {
  h.array() *= (layer == 1 ? m.layer1 : m.layer2).array();
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* where) {
  if (!m.allFinite()) throw NumericalError(std::string("non-finite value in ") + where);
}

}  // namespace detail

/// Cached activations of a batched forward pass (examples are columns).
template <typename Scalar>
struct BatchForward {
  Mat<Scalar> pre1, h1, pre2, h2;
  Vec<Scalar> mu;
  Vec<Scalar> raw_logvar;
  Vec<Scalar> var;  // clamp(exp(raw_logvar), kVarMin, kVarMax)
};

template <typename Scalar>
Scalar clamp_variance(Scalar raw_logvar) {
  using std::exp;
  return std::clamp(exp(raw_logvar), Scalar(kVarMin), Scalar(kVarMax));
}

template <typename Scalar>
bool clamp_active(Scalar raw_logvar) {
  using std::exp;
  const Scalar v = exp(raw_logvar);
  return v < Scalar(kVarMin) || v > Scalar(kVarMax);
}

template <typename Scalar, typename Mask = NoMask>
BatchForward<Scalar> forward_batch(const MLPParams<Scalar>& p, const Eigen::Ref<const Mat<Scalar>>& X,
                                   const Mask& mask = {}) {
  if (X.rows() != p.input_dim()) throw std::invalid_argument("forward: input dimension mismatch");
  BatchForward<Scalar> f;
  f.pre1.noalias() = p.W1() * X;
  f.pre1.colwise() += p.b1();
  f.h1 = f.pre1.cwiseMax(Scalar(0));
  detail::apply_mask(f.h1, mask, 1);
  detail::require_finite(f.h1, "hidden layer 1");

  f.pre2.noalias() = p.W2() * f.h1;
  f.pre2.colwise() += p.b2();
  f.h2 = f.pre2.cwiseMax(Scalar(0));
  detail::apply_mask(f.h2, mask, 2);
  detail::require_finite(f.h2, "hidden layer 2");

  Mat<Scalar> out = p.W3() * f.h2;
  out.colwise() += p.b3();
  detail::require_finite(out, "output layer");
  f.mu = out.row(0).transpose();
  f.raw_logvar = out.row(1).transpose();
  f.var = f.raw_logvar.unaryExpr([](Scalar s) { return clamp_variance(s); });
  return f;
}

template <typename Scalar, typename Mask = NoMask>
GaussianPrediction<Scalar> forward(const MLPParams<Scalar>& p, const Eigen::Ref<const Vec<Scalar>>& x,
                                   const Mask& mask = {}) {
  const auto f = forward_batch<Scalar>(p, Mat<Scalar>(x), mask);
  return {f.mu(0), f.var(0)};
}

// ---------------------------------------------------------------------------
// Losses

enum class LossKind { Nll, BetaNll };

struct LossSpec {
  LossKind kind = LossKind::Nll;
  double beta = 0.5;
};

/// 0.5 log(var) + (y - mu)^2 / (2 var); no additive constant.
template <typename Scalar>
Scalar nll_loss(const GaussianPrediction<Scalar>& pred, Scalar y) {
  using std::log;
  const Scalar r = y - pred.mu;
  return Scalar(0.5) * log(pred.var) + r * r / (Scalar(2) * pred.var);
}

/// var^beta * nll, where var^beta is treated as a constant when
/// differentiating. The value identity holds exactly; only gradients differ.
template <typename Scalar>
Scalar beta_nll_loss(const GaussianPrediction<Scalar>& pred, Scalar y, Scalar beta) {
  using std::pow;
  return pow(pred.var, beta) * nll_loss(pred, y);
}

/// Per-example loss value and its partials w.r.t. mu and var.
template <typename Scalar>
struct LossPartials {
  Scalar value{};
  Scalar d_mu{};
  Scalar d_var{};
};

template <typename Scalar>
LossPartials<Scalar> loss_partials(const GaussianPrediction<Scalar>& pred, Scalar y, const LossSpec& spec) {
  using std::pow;
  const Scalar r = y - pred.mu;
  LossPartials<Scalar> out;
  out.value = nll_loss(pred, y);
  out.d_mu = -r / pred.var;
  out.d_var = Scalar(0.5) / pred.var - r * r / (Scalar(2) * pred.var * pred.var);
  if (spec.kind == LossKind::BetaNll && spec.beta != 0.0) {
    const Scalar w = pow(pred.var, Scalar(spec.beta));
    out.value *= w;
    out.d_mu *= w;
    out.d_var *= w;
  }
  return out;
}

template <typename Scalar>
struct BackwardResult {
  Scalar loss{};  // mean over the batch
  MLPParams<Scalar> grads;
};

/// Mean-over-batch loss and gradient w.r.t. every parameter. Gradient through
/// an active variance clamp is zero.
template <typename Scalar, typename Mask = NoMask>
BackwardResult<Scalar> backward(const MLPParams<Scalar>& p, const Eigen::Ref<const Mat<Scalar>>& X,
                                const Eigen::Ref<const Vec<Scalar>>& y, const LossSpec& loss,
                                const Mask& mask = {}) {
  const Eigen::Index B = X.cols();
  if (B == 0) throw std::invalid_argument("backward: empty batch");
  if (y.size() != B) throw std::invalid_argument("backward: target count mismatch");

  const auto f = forward_batch<Scalar>(p, X, mask);
  const Scalar inv_b = Scalar(1) / Scalar(B);

  Mat<Scalar> d_out(2, B);
  Scalar total{};
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto lp = loss_partials<Scalar>({f.mu(i), f.var(i)}, y(i), loss);
    total += lp.value;
    d_out(0, i) = lp.d_mu * inv_b;
    // d var / d raw = var inside the clamp, 0 outside.
    d_out(1, i) = clamp_active(f.raw_logvar(i)) ? Scalar(0) : lp.d_var * f.var(i) * inv_b;
  }

  BackwardResult<Scalar> r{total * inv_b, MLPParams<Scalar>(p.input_dim())};
  auto& g = r.grads;
  g.W3().noalias() = d_out * f.h2.transpose();
  g.b3() = d_out.rowwise().sum();

  Mat<Scalar> d_h2 = p.W3().transpose() * d_out;
  detail::apply_mask(d_h2, mask, 2);
  Mat<Scalar> d_pre2 = (f.pre2.array() > Scalar(0)).select(d_h2.array(), Scalar(0)).matrix();
  g.W2().noalias() = d_pre2 * f.h1.transpose();
  g.b2() = d_pre2.rowwise().sum();

  Mat<Scalar> d_h1 = p.W2().transpose() * d_pre2;
  detail::apply_mask(d_h1, mask, 1);
  Mat<Scalar> d_pre1 = (f.pre1.array() > Scalar(0)).select(d_h1.array(), Scalar(0)).matrix();
  g.W1().noalias() = d_pre1 * X.transpose();
  g.b1() = d_pre1.rowwise().sum();

  if (!g.flat().allFinite()) throw NumericalError("non-finite gradient");
  if (!std::isfinite(static_cast<double>(r.loss))) throw NumericalError("non-finite loss");
  return r;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  Vec<Scalar> m;
  Vec<Scalar> v;
  long t = 0;

  AdamState() = default;
  explicit AdamState(Eigen::Index n) : m(Vec<Scalar>::Zero(n)), v(Vec<Scalar>::Zero(n)) {}
};

/// Bias-corrected Adam with decoupled weight decay: the decay
/// params *= (1 - lr * wd) is applied before the moment update.
template <typename Scalar>
void adam_step(Vec<Scalar>& params, const Vec<Scalar>& grads, AdamState<Scalar>& state, Scalar lr,
               Scalar weight_decay, const AdamConfig& cfg = {}) {
  using std::pow;
  if (state.m.size() != params.size() || grads.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  ++state.t;
  if (weight_decay != Scalar(0)) params *= (Scalar(1) - lr * weight_decay);
  const Scalar b1 = Scalar(cfg.beta1), b2 = Scalar(cfg.beta2);
  state.m = b1 * state.m + (Scalar(1) - b1) * grads;
  state.v = b2 * state.v + (Scalar(1) - b2) * grads.cwiseAbs2();
  const Scalar c1 = Scalar(1) - pow(b1, Scalar(state.t));
  const Scalar c2 = Scalar(1) - pow(b2, Scalar(state.t));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + Scalar(cfg.eps));
}

template <typename Scalar>
void adam_step(MLPParams<Scalar>& params, const MLPParams<Scalar>& grads, AdamState<Scalar>& state,
               Scalar lr, Scalar weight_decay, const AdamConfig& cfg = {}) {
  adam_step(params.flat(), grads.flat(), state, lr, weight_decay, cfg);
}

/// He-uniform (fan-in) weights, zero biases. Initial log-variance bias is 0.
template <typename Scalar>
MLPParams<Scalar> he_uniform_init(Eigen::Index input_dim, std::uint64_t seed) {
  Rng rng(seed);
  MLPParams<Scalar> p(input_dim);
  auto fill = [&rng](auto block, Eigen::Index fan_in) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (Eigen::Index j = 0; j < block.cols(); ++j)
      for (Eigen::Index i = 0; i < block.rows(); ++i) block(i, j) = Scalar(bound * u(rng));
  };
  fill(p.W1(), input_dim);
  fill(p.W2(), kHidden);
  fill(p.W3(), kHidden);
  return p;
}

}  // namespace seedbench::nn
