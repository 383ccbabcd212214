#include "seedbench/methods.hpp"
#include "seedbench/scoring.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace seedbench;
using namespace seedbench::methods;

namespace {

// 1-D toys; inputs are 1 x n.
TrainingSet linear_toy(std::size_t n, double noise, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  TrainingSet t{Eigen::MatrixXd(1, static_cast<Eigen::Index>(n)), Eigen::VectorXd(static_cast<Eigen::Index>(n))};
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    t.inputs(0, i) = u(rng);
    t.targets(i) = 2.0 * t.inputs(0, i) + noise * z(rng);
  }
  return t;
}

TrainingSet hetero_toy(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  TrainingSet t{Eigen::MatrixXd(1, static_cast<Eigen::Index>(n)), Eigen::VectorXd(static_cast<Eigen::Index>(n))};
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double x = u(rng);
    t.inputs(0, i) = x;
    t.targets(i) = std::sin(2.0 * x) + (x < 0 ? 0.1 : 0.5) * z(rng);
  }
  return t;
}

double mean_crps(const PredictiveSet& preds, const Eigen::VectorXd& y) {
  return scoring::mean_metric(preds, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), {}).mean;
}

Eigen::VectorXd means_of(const PredictiveSet& preds) {
  Eigen::VectorXd m(static_cast<Eigen::Index>(preds.size()));
  for (std::size_t i = 0; i < preds.size(); ++i) m(static_cast<Eigen::Index>(i)) = preds[i].mu.mean();
  return m;
}

// Average over inputs of the across-component variance of mu.
double component_mu_spread(const PredictiveSet& preds) {
  double s = 0.0;
  for (const auto& p : preds) s += (p.mu.array() - p.mu.mean()).square().mean();
  return s / static_cast<double>(preds.size());
}

MethodConfig quick(MethodKind k, int epochs) {
  auto c = MethodConfig::defaults(k);
  c.epochs = epochs;
  return c;
}

}  // namespace

TEST(Config, DefaultsPerKind) {
  const auto map = MethodConfig::defaults(MethodKind::Map);
  EXPECT_EQ(map.epochs, 500);
  EXPECT_EQ(map.lr, 1e-3);
  EXPECT_EQ(map.weight_decay, 1e-5);
  EXPECT_EQ(map.ensemble_size, 5);
  EXPECT_EQ(map.samples, 50);
  EXPECT_EQ(map.beta, 0.5);
  EXPECT_EQ(map.dropout_rate, 0.1);
  const auto bbb = MethodConfig::defaults(MethodKind::Bbb);
  EXPECT_EQ(bbb.epochs, 1000);
  EXPECT_EQ(bbb.weight_decay, 0.0);
  EXPECT_EQ(bbb.prior_std, 1.0);
  EXPECT_EQ(MethodConfig::defaults(MethodKind::MapRestarts).restarts, 5);
  EXPECT_EQ(parse_method_kind("MC_DROPOUT"), MethodKind::McDropout);
  EXPECT_THROW(parse_method_kind("SWAG"), std::invalid_argument);
  auto bad = map;
  bad.beta = 1.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Map, FitsLinearToy) {
  const auto train = linear_toy(200, 0.01, 1);
  const auto test = linear_toy(500, 0.0, 2);
  const auto r = train_map(train, MethodConfig::defaults(MethodKind::Map), 3);
  ASSERT_TRUE(r.valid);
  const Eigen::VectorXd mu = means_of(predict_map(r.model, test.inputs));
  const double rmse = std::sqrt((mu - test.targets).squaredNorm() / static_cast<double>(test.size()));
  EXPECT_LT(rmse, 0.1);
}

TEST(Map, SameSeedIsBitIdentical) {
  const auto train = linear_toy(50, 0.1, 4);
  const auto cfg = quick(MethodKind::Map, 50);
  const auto a = train_map(train, cfg, 9), b = train_map(train, cfg, 9);
  EXPECT_TRUE(a.model == b.model);
  EXPECT_FALSE(a.model == train_map(train, cfg, 10).model);
}

TEST(Map, LearnsHeteroscedasticNoise) {
  const auto train = hetero_toy(400, 5);
  const auto r = train_map(train, MethodConfig::defaults(MethodKind::Map), 6);
  ASSERT_TRUE(r.valid);
  Eigen::MatrixXd left = Eigen::RowVectorXd::LinSpaced(50, -0.95, -0.05);
  Eigen::MatrixXd right = Eigen::RowVectorXd::LinSpaced(50, 0.05, 0.95);
  auto mean_var = [](const PredictiveSet& p) {
    double s = 0;
    for (const auto& d : p) s += d.var(0);
    return s / static_cast<double>(p.size());
  };
  EXPECT_GT(mean_var(predict_map(r.model, right)), mean_var(predict_map(r.model, left)));
}

TEST(Map, TooFewExamplesRejected) {
  EXPECT_THROW(train_map(linear_toy(1, 0.1, 1), quick(MethodKind::Map, 1), 1), std::invalid_argument);
}

TEST(Map, NonFiniteLossMarksRunInvalidWithEpoch) {
  auto train = linear_toy(20, 0.1, 1);
  train.targets(3) = std::numeric_limits<double>::infinity();
  const auto r = train_map(train, quick(MethodKind::Map, 5), 1);
  EXPECT_FALSE(r.valid);
  ASSERT_TRUE(r.invalid_epoch.has_value());
  EXPECT_EQ(*r.invalid_epoch, 0);
  EXPECT_FALSE(r.reason.empty());
}

TEST(BetaNll, BetaZeroReproducesMapExactly) {
  const auto train = hetero_toy(60, 8);
  auto cfg = quick(MethodKind::MapBetaNll, 40);
  cfg.beta = 0.0;
  const auto a = train_map(train, cfg, 12);
  const auto b = train_map(train, quick(MethodKind::Map, 40), 12);
  EXPECT_TRUE(a.model == b.model);
  cfg.beta = 0.5;
  EXPECT_FALSE(train_map(train, cfg, 12).model == b.model);
}

TEST(Restarts, SingleRestartIsPlainMap) {
  const auto train = linear_toy(40, 0.1, 3);
  auto cfg = quick(MethodKind::MapRestarts, 30);
  cfg.restarts = 1;
  RestartReport rep;
  const auto a = train_map_restarts(train, cfg, 77, &rep);
  EXPECT_TRUE(a.model == train_map(train, quick(MethodKind::Map, 30), 77).model);
  EXPECT_TRUE(rep.seeds.empty());
}

TEST(Restarts, PicksBestValidationRunWithDistinctSeeds) {
  const auto train = hetero_toy(80, 4);
  auto cfg = quick(MethodKind::MapRestarts, 60);
  cfg.restarts = 5;
  RestartReport rep;
  const auto r = train_map_restarts(train, cfg, 31, &rep);
  ASSERT_TRUE(r.valid);
  ASSERT_EQ(rep.validation_crps.size(), 5u);
  EXPECT_EQ(std::set<std::uint64_t>(rep.seeds.begin(), rep.seeds.end()).size(), 5u);
  for (double v : rep.validation_crps) EXPECT_LE(rep.validation_crps[rep.chosen], v);
  EXPECT_EQ(rep.seeds[2], mix_seed(31, restart_purpose(2), 2));
}

TEST(Ensemble, SingleMemberEqualsMap) {
  const auto train = linear_toy(40, 0.1, 3);
  const auto test = linear_toy(30, 0.1, 4);
  auto cfg = quick(MethodKind::Ensemble, 30);
  cfg.ensemble_size = 1;
  const auto e = train_ensemble(train, cfg, 5);
  const auto m = train_map(train, quick(MethodKind::Map, 30), ensemble_member_seed(5, 0));
  const auto pe = predict_ensemble(e.model, test.inputs);
  const auto pm = predict_map(m.model, test.inputs);
  for (std::size_t i = 0; i < pe.size(); ++i) {
    EXPECT_EQ(pe[i].mu, pm[i].mu);
    EXPECT_EQ(pe[i].var, pm[i].var);
  }
}

TEST(Ensemble, PermutationInvariantAndNoWorseThanWorstMember) {
  const auto train = hetero_toy(200, 11);
  const auto test = hetero_toy(300, 12);
  const auto e = train_ensemble(train, MethodConfig::defaults(MethodKind::Ensemble), 13);
  ASSERT_TRUE(e.valid);
  ASSERT_EQ(e.model.size(), 5u);
  const double mix = mean_crps(predict_ensemble(e.model, test.inputs), test.targets);
  auto reversed = e.model;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_NEAR(mean_crps(predict_ensemble(reversed, test.inputs), test.targets), mix, 1e-12);
  double worst = 0.0;
  for (const auto& m : e.model) worst = std::max(worst, mean_crps(predict_map(m, test.inputs), test.targets));
  EXPECT_LE(mix, worst);
}

TEST(McDropout, RateZeroCollapsesToSingleGaussian) {
  const auto train = linear_toy(40, 0.1, 3);
  const auto test = linear_toy(20, 0.1, 4);
  const auto m = train_map(train, quick(MethodKind::Map, 20), 1);
  const auto mc = predict_mc_dropout(m.model, test.inputs, 50, 0.0, 99);
  const auto single = predict_map(m.model, test.inputs);
  for (std::size_t i = 0; i < mc.size(); ++i) {
    EXPECT_TRUE((mc[i].mu.array() == single[i].mu(0)).all());
    EXPECT_NEAR(scoring::crps_mixture(mc[i], test.targets(static_cast<Eigen::Index>(i))),
                scoring::crps_gaussian(single[i].mu(0), std::sqrt(single[i].var(0)),
                                       test.targets(static_cast<Eigen::Index>(i))),
                1e-12);
  }
}

TEST(McDropout, DeterministicAndSpreadOnTrainedNetwork) {
  const auto train = hetero_toy(150, 21);
  const auto test = hetero_toy(40, 22);
  const auto r = train_mc_dropout(train, quick(MethodKind::McDropout, 200), 23);
  ASSERT_TRUE(r.valid);
  const auto a = predict_mc_dropout(r.model, test.inputs, 50, 0.1, 5);
  const auto b = predict_mc_dropout(r.model, test.inputs, 50, 0.1, 5);
  ASSERT_EQ(a[0].size(), 50);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i].mu == b[i].mu && a[i].var == b[i].var);
  EXPECT_GT(component_mu_spread(a), 0.0);
  EXPECT_FALSE(predict_mc_dropout(r.model, test.inputs, 50, 0.1, 6)[0].mu == a[0].mu);
}

TEST(Kl, Examples) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(7), one = Eigen::VectorXd::Ones(7);
  EXPECT_NEAR(kl_mean_field_gaussian(zero, one, 1.0), 0.0, 1e-15);
  EXPECT_NEAR(kl_mean_field_gaussian(Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, 1.0), 1.0), 0.5,
              1e-15);
  EXPECT_THROW(kl_mean_field_gaussian(zero, zero, 1.0), std::invalid_argument);
}

// KL(N(1,1) || N(0,1)) by Simpson quadrature of q log(q/p).
TEST(Kl, MatchesQuadrature) {
  auto q = [](double x) { return std::exp(-0.5 * (x - 1) * (x - 1)) / std::sqrt(2 * M_PI); };
  auto p = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI); };
  const double a = -15, b = 17;
  const int n = 20000;
  const double h = (b - a) / n;
  double s = 0;
  for (int i = 0; i <= n; ++i) {
    const double x = a + i * h;
    const double f = q(x) * std::log(q(x) / p(x));
    s += f * (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2));
  }
  s *= h / 3;
  EXPECT_NEAR(s, 0.5, 1e-10);
  EXPECT_NEAR(kl_mean_field_gaussian(Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, 1.0), 1.0), s,
              1e-9);
}

TEST(Kl, NonNegative) {
  Rng rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd mu(10), sd(10);
    for (int k = 0; k < 10; ++k) {
      mu(k) = z(rng);
      sd(k) = std::exp(z(rng));
    }
    EXPECT_GE(kl_mean_field_gaussian(mu, sd, std::exp(0.5 * z(rng))), 0.0);
  }
}

TEST(Bbb, PosteriorAtPriorHasZeroKl) {
  VariationalParams q;
  q.input_dim = 2;
  q.mean = Eigen::VectorXd::Zero(nn::MLPParams<double>::size_for(2));
  q.rho = Eigen::VectorXd::Constant(q.mean.size(), VariationalParams::softplus_inverse(1.0));
  EXPECT_NEAR(q.stddev().maxCoeff(), 1.0, 1e-12);
  EXPECT_NEAR(kl_mean_field_gaussian(q.mean, q.stddev(), 1.0), 0.0, 1e-8);
}

TEST(Bbb, SameSeedIsBitIdentical) {
  const auto train = linear_toy(30, 0.1, 1);
  const auto cfg = quick(MethodKind::Bbb, 20);
  const auto a = train_bbb(train, cfg, 4), b = train_bbb(train, cfg, 4);
  EXPECT_TRUE(a.model.mean == b.model.mean);
  EXPECT_TRUE(a.model.rho == b.model.rho);
  EXPECT_TRUE((a.model.stddev().array() > 0).all());
}

TEST(Bbb, RecoversLinearSlopeAndStaysNearMap) {
  // The KL weight is 1/|train|, so recovery needs the likelihood to dominate:
  // at n = 200 the posterior is still pulled toward the prior.
  const auto train = linear_toy(500, 0.1, 31);
  const auto test = linear_toy(400, 0.1, 32);
  const auto q = train_bbb(train, MethodConfig::defaults(MethodKind::Bbb), 33);
  ASSERT_TRUE(q.valid);
  // Slope of the posterior-mean network, by least squares over a grid.
  Eigen::MatrixXd grid = Eigen::RowVectorXd::LinSpaced(101, -1.0, 1.0);
  const Eigen::VectorXd mu = means_of(predict_map(q.model.mean_network(), grid));
  const Eigen::VectorXd x = grid.row(0).transpose();
  const double xm = x.mean();
  const double slope = ((x.array() - xm) * (mu.array() - mu.mean())).sum() / (x.array() - xm).square().sum();
  EXPECT_NEAR(slope, 2.0, 0.1);

  const auto m = train_map(train, MethodConfig::defaults(MethodKind::Map), 33);
  const double crps_bbb = mean_crps(predict_bbb(q.model, test.inputs, 50, 7), test.targets);
  const double crps_map = mean_crps(predict_map(m.model, test.inputs), test.targets);
  EXPECT_LT(crps_bbb, 2.0 * crps_map);
}

TEST(Bbb, VanishingStdGivesMeanNetwork) {
  VariationalParams q;
  q.input_dim = 1;
  q.mean = nn::he_uniform_init<double>(1, 3).flat();
  q.rho = Eigen::VectorXd::Constant(q.mean.size(), -60.0);
  Eigen::MatrixXd x = Eigen::RowVectorXd::LinSpaced(10, -1, 1);
  const auto mix = predict_bbb(q, x, 20, 1);
  const auto single = predict_map(q.mean_network(), x);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    EXPECT_NEAR((mix[i].mu.array() - single[i].mu(0)).abs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR((mix[i].var.array() - single[i].var(0)).abs().maxCoeff(), 0.0, 1e-12);
  }
}

TEST(Bbb, DeterministicAndSpreadGrowsWithPosteriorStd) {
  VariationalParams q;
  q.input_dim = 1;
  q.mean = nn::he_uniform_init<double>(1, 3).flat();
  Eigen::MatrixXd x = Eigen::RowVectorXd::LinSpaced(25, -1, 1);
  q.rho = Eigen::VectorXd::Constant(q.mean.size(), VariationalParams::softplus_inverse(0.05));
  const auto narrow = predict_bbb(q, x, 50, 9);
  const auto again = predict_bbb(q, x, 50, 9);
  for (std::size_t i = 0; i < narrow.size(); ++i) EXPECT_TRUE(narrow[i].mu == again[i].mu);
  q.rho = Eigen::VectorXd::Constant(q.mean.size(), VariationalParams::softplus_inverse(0.10));
  const auto wide = predict_bbb(q, x, 50, 9);
  EXPECT_GT(component_mu_spread(wide), component_mu_spread(narrow));
}

TEST(Dispatch, TrainAndPredictEveryKind) {
  const auto toy = linear_toy(30, 0.1, 1);
  const auto test = linear_toy(10, 0.1, 2);
  for (auto k : {MethodKind::Map, MethodKind::MapBetaNll, MethodKind::MapRestarts, MethodKind::Ensemble,
                 MethodKind::McDropout, MethodKind::Bbb}) {
    auto cfg = quick(k, 5);
    cfg.ensemble_size = 2;
    cfg.samples = 3;
    cfg.restarts = 2;
    const auto r = train(toy, cfg, 1);
    ASSERT_TRUE(r.valid) << to_string(k);
    const auto p = predict(r.model, cfg, test.inputs, 2);
    ASSERT_EQ(p.size(), 10u);
    const Eigen::Index K = k == MethodKind::Ensemble ? 2 : (k == MethodKind::McDropout || k == MethodKind::Bbb ? 3 : 1);
    for (const auto& d : p) {
      EXPECT_EQ(d.size(), K) << to_string(k);
      EXPECT_TRUE(within_clamp_range(d));
    }
  }
}
