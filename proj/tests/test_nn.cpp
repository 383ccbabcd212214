#include "seedbench/nn.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace seedbench;
using namespace seedbench::nn;

namespace {

std::vector<Eigen::Index> every_coordinate(Eigen::Index size) {
  std::vector<Eigen::Index> c(static_cast<std::size_t>(size));
  std::iota(c.begin(), c.end(), Eigen::Index{0});
  return c;
}

}  // namespace

TEST(Forward, ZeroNetworkGivesUnitVariance) {
  const MLPParams<double> p(4);
  const auto out = forward<double>(p, Eigen::VectorXd::Ones(4));
  EXPECT_EQ(out.mu, 0.0);
  EXPECT_EQ(out.var, 1.0);
}

TEST(Forward, VarianceClampedBelowAndAbove) {
  MLPParams<double> p(2);
  p.b3()(1) = -20.0;
  EXPECT_EQ(forward<double>(p, Eigen::VectorXd::Zero(2)).var, 1e-3);
  p.b3()(1) = 20.0;
  EXPECT_EQ(forward<double>(p, Eigen::VectorXd::Zero(2)).var, 1e3);
}

TEST(Forward, ZeroMaskLeavesBiasOnlyPath) {
  auto p = he_uniform_init<double>(3, 5);
  p.b1().setConstant(0.2);
  p.b2().setConstant(-0.1);
  p.b3() << 0.7, -0.4;
  DropoutMask<double> m;
  m.layer1 = Eigen::VectorXd::Zero(kHidden);
  m.layer2 = Eigen::VectorXd::Zero(kHidden);
  const auto out = forward<double>(p, Eigen::Vector3d(1, -2, 0.5), m);
  EXPECT_EQ(out.mu, 0.7);
  EXPECT_DOUBLE_EQ(out.var, std::exp(-0.4));
}

TEST(Forward, ClampHoldsForExtremeParameters) {
  Rng rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    auto p = he_uniform_init<double>(4, rng());
    p.flat() *= 1.0 + 4.0 * (i % 5);
    Eigen::MatrixXd X(4, 20);
    for (Eigen::Index k = 0; k < X.size(); ++k) X.data()[k] = 3.0 * z(rng);
    const auto f = forward_batch<double>(p, X);
    EXPECT_GE(f.var.minCoeff(), 1e-3);
    EXPECT_LE(f.var.maxCoeff(), 1e3);
  }
}

TEST(Forward, NonFiniteValueNamesLayer) {
  auto p = he_uniform_init<double>(2, 1);
  p.b3()(0) = std::numeric_limits<double>::infinity();
  try {
    forward<double>(p, Eigen::Vector2d(0.1, 0.2));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("output layer"), std::string::npos);
  }
}

TEST(Loss, NllExamples) {
  EXPECT_EQ(nll_loss<double>({3.0, 1.0}, 3.0), 0.0);
  EXPECT_DOUBLE_EQ(nll_loss<double>({0.0, 1.0}, 2.0), 2.0);
}

TEST(Loss, NllMeanPartialMatchesDifferences) {
  for (double mu : {-1.0, 0.3, 2.0})
    for (double var : {0.1, 1.0, 5.0}) {
      const double y = 0.7, h = 1e-6;
      const double fd = (nll_loss<double>({mu + h, var}, y) - nll_loss<double>({mu - h, var}, y)) / (2 * h);
      const auto lp = loss_partials<double>({mu, var}, y, {});
      EXPECT_NEAR(lp.d_mu, -(y - mu) / var, 1e-15);
      EXPECT_NEAR(fd, lp.d_mu, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Loss, NllIncreasesWithResidual) {
  double prev = -1e300;
  for (double r = 0.0; r < 5.0; r += 0.25) {
    const double v = nll_loss<double>({0.0, 0.7}, r);
    EXPECT_GT(v, prev);
    EXPECT_EQ(v, nll_loss<double>({0.0, 0.7}, -r));
    prev = v;
  }
}

TEST(Loss, BetaNllExamples) {
  EXPECT_DOUBLE_EQ(beta_nll_loss<double>({1.0, 4.0}, 1.0, 0.5), std::log(4.0));
  const GaussianPrediction<double> pred{0.2, 2.5};
  EXPECT_EQ(beta_nll_loss<double>(pred, 1.1, 0.0), nll_loss<double>(pred, 1.1));
  const auto lp = loss_partials<double>({0.0, 4.0}, 1.0, {LossKind::BetaNll, 0.5});
  EXPECT_DOUBLE_EQ(lp.d_mu, -(1.0 - 0.0) / 2.0);
}

TEST(Loss, BetaNllValueIdentity) {
  Rng rng(8);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 100; ++i) {
    const GaussianPrediction<double> pred{u(rng), std::exp(u(rng))};
    const double y = u(rng), beta = (u(rng) + 3) / 6;
    EXPECT_DOUBLE_EQ(beta_nll_loss<double>(pred, y, beta), std::pow(pred.var, beta) * nll_loss<double>(pred, y));
    EXPECT_DOUBLE_EQ(loss_partials<double>(pred, y, {LossKind::BetaNll, beta}).value,
                     beta_nll_loss<double>(pred, y, beta));
  }
}

TEST(Backward, MatchesFiniteDifferencesEverywhere) {
  const LossSpec specs[] = {{LossKind::Nll, 0.0}, {LossKind::BetaNll, 0.0}, {LossKind::BetaNll, 0.5}};
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto g = oracle::draw_gradient_point(mix_seed(1234, "unit-grad", s));
    for (const auto& spec : specs) {
      const auto analytic = backward<double>(g.params, g.X, g.y, spec).grads.flat();
      EXPECT_LT(oracle::fd_worst_error(g, analytic, spec, every_coordinate(analytic.size())), 1e-4);
    }
  }
}

TEST(Backward, BetaZeroEqualsNll) {
  const auto g = oracle::draw_gradient_point(99);
  const auto a = backward<double>(g.params, g.X, g.y, {LossKind::Nll, 0.0});
  const auto b = backward<double>(g.params, g.X, g.y, {LossKind::BetaNll, 0.0});
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_TRUE(a.grads.flat() == b.grads.flat());
}

TEST(Backward, ActiveClampGivesZeroLogvarGradient) {
  auto p = he_uniform_init<double>(2, 4);
  p.b3()(1) = -30.0;  // far below the clamp for every input
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(2, 6);
  Eigen::VectorXd y = Eigen::VectorXd::Random(6);
  const auto r = backward<double>(p, X, y, {});
  EXPECT_EQ(r.grads.b3()(1), 0.0);
  EXPECT_TRUE(r.grads.W3().row(1).isZero(0.0));
}

TEST(Backward, ZeroResidualKillsMeanPath) {
  auto p = he_uniform_init<double>(3, 17);
  p.b3()(1) = 0.5;
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(3, 8);
  const auto f = forward_batch<double>(p, X);
  const auto r = backward<double>(p, X, f.mu, {});
  EXPECT_EQ(r.grads.b3()(0), 0.0);
  EXPECT_TRUE(r.grads.W3().row(0).isZero(0.0));
}

TEST(Backward, DuplicatedBatchGivesSameGradient) {
  const auto g = oracle::draw_gradient_point(5);
  Eigen::MatrixXd X2(g.X.rows(), 2 * g.X.cols());
  X2 << g.X, g.X;
  Eigen::VectorXd y2(2 * g.y.size());
  y2 << g.y, g.y;
  const auto a = backward<double>(g.params, g.X, g.y, {});
  const auto b = backward<double>(g.params, X2, y2, {});
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  EXPECT_TRUE(a.grads.flat().isApprox(b.grads.flat(), 1e-12));
}

TEST(Backward, EmptyBatchRejected) {
  const MLPParams<double> p(2);
  EXPECT_THROW(backward<double>(p, Eigen::MatrixXd(2, 0), Eigen::VectorXd(0), {}), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 0.5);
  Eigen::VectorXd g = Eigen::VectorXd::Constant(1, 1.0);
  AdamState<double> st(1);
  adam_step<double>(p, g, st, 1e-3, 0.0);
  // m_hat = 1, v_hat = 1: step = lr / (1 + eps).
  EXPECT_NEAR(p(0) - 0.5, -1e-3 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(st.t, 1);
}

TEST(Adam, ZeroGradientWithoutDecayIsNoOp) {
  Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(5, -1, 1);
  const Eigen::VectorXd before = p;
  AdamState<double> st(5);
  for (int i = 0; i < 3; ++i) adam_step<double>(p, Eigen::VectorXd::Zero(5), st, 1e-3, 0.0);
  EXPECT_TRUE(p == before);
}

TEST(Adam, DecayOnlyStepScalesParameters) {
  Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(5, -1, 2);
  const Eigen::VectorXd before = p;
  AdamState<double> st(5);
  adam_step<double>(p, Eigen::VectorXd::Zero(5), st, 1e-3, 1e-5);
  EXPECT_TRUE(p.isApprox(before * (1.0 - 1e-3 * 1e-5), 1e-15));
}

TEST(Adam, ShapeMismatchRejected) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
  AdamState<double> st(2);
  EXPECT_THROW(adam_step<double>(p, Eigen::VectorXd::Zero(3), st, 1e-3, 0.0), std::invalid_argument);
}

TEST(Init, HeUniformBoundsAndZeroBiases) {
  const auto p = he_uniform_init<double>(8, 21);
  EXPECT_LE(p.W1().cwiseAbs().maxCoeff(), std::sqrt(6.0 / 8));
  EXPECT_LE(p.W2().cwiseAbs().maxCoeff(), std::sqrt(6.0 / kHidden));
  EXPECT_TRUE(p.b1().isZero(0.0) && p.b2().isZero(0.0) && p.b3().isZero(0.0));
  EXPECT_TRUE(p == he_uniform_init<double>(8, 21));
}

TEST(Dropout, MaskEntriesAndDeterminism) {
  const auto m = make_dropout_mask<double>(0.25, 3);
  for (Eigen::Index i = 0; i < kHidden; ++i) {
    EXPECT_TRUE(m.layer1(i) == 0.0 || m.layer1(i) == 1.0 / 0.75);
    EXPECT_TRUE(m.layer2(i) == 0.0 || m.layer2(i) == 1.0 / 0.75);
  }
  EXPECT_TRUE(m.layer1 == make_dropout_mask<double>(0.25, 3).layer1);
  EXPECT_TRUE(make_dropout_mask<double>(0.0, 3).layer1.isOnes(0.0));
  EXPECT_THROW(make_dropout_mask<double>(1.0, 3), std::invalid_argument);
}
