#include "seedbench/selftest.hpp"

#include "seedbench/nn.hpp"
#include "seedbench/reliability.hpp"
#include "seedbench/scoring.hpp"
#include "seedbench/seeding.hpp"
#include "seedbench/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <bit>
#include <numeric>

namespace seedbench::cli {
namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

// Finite differences in long double against the double-precision backward
// pass. For beta-NLL the var^beta weights are frozen at the base point,
// which is what "detached" means for the gradient.
SelftestResult gradient_suite(bool quick, std::uint64_t seed) {
  using LD = long double;
  const int draws = quick ? 3 : 20;
  const int coords = quick ? 300 : 1200;
  double worst = 0.0;
  int checked = 0;
  for (double beta : {-1.0, 0.0, 0.5}) {
    const nn::LossSpec spec = beta < 0 ? nn::LossSpec{nn::LossKind::Nll, 0.0} : nn::LossSpec{nn::LossKind::BetaNll, beta};
    for (int draw = 0; draw < draws; ++draw) {
      Rng rng(mix_seed(seed, "grad", static_cast<std::uint64_t>(draw)));
      std::normal_distribution<double> z(0.0, 1.0);
      const Eigen::Index d = 3, B = 5;
      nn::MLPParams<double> p;
      Eigen::MatrixXd X(d, B);
      Eigen::VectorXd y(B);
      for (int attempt = 0;; ++attempt) {
        p = nn::he_uniform_init<double>(d, rng());
        for (Eigen::Index i = 0; i < p.b1().size(); ++i) p.b1()(i) = 0.1 * z(rng);
        for (Eigen::Index i = 0; i < p.b2().size(); ++i) p.b2()(i) = 0.1 * z(rng);
        p.b3()(0) = 0.3 * z(rng);
        p.b3()(1) = 0.3 * z(rng);
        for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = z(rng);
        for (Eigen::Index i = 0; i < B; ++i) y(i) = z(rng);
        const auto f = nn::forward_batch<double>(p, X);
        const bool kink = (f.pre1.array().abs() < 1e-3).any() || (f.pre2.array().abs() < 1e-3).any();
        const bool clamped = (f.raw_logvar.array().abs() > 6.0).any();
        if (!kink && !clamped) break;
        if (attempt > 100) return {"gradients", false, "could not draw a kink-free point"};
      }
      const auto analytic = nn::backward<double>(p, X, y, spec).grads.flat();
      const auto base = nn::forward_batch<double>(p, X);
      std::vector<LD> w(static_cast<std::size_t>(B), 1.0L);
      if (spec.kind == nn::LossKind::BetaNll)
        for (Eigen::Index i = 0; i < B; ++i) w[static_cast<std::size_t>(i)] = std::pow(static_cast<LD>(base.var(i)), static_cast<LD>(beta));

      const nn::Mat<LD> Xl = X.cast<LD>();
      auto loss_at = [&](const nn::Vec<LD>& flat) {
        const nn::MLPParams<LD> q(d, flat);
        const auto f = nn::forward_batch<LD>(q, Xl);
        LD total = 0;
        for (Eigen::Index i = 0; i < B; ++i) {
          const LD r = static_cast<LD>(y(i)) - f.mu(i);
          total += w[static_cast<std::size_t>(i)] * (0.5L * std::log(f.var(i)) + r * r / (2.0L * f.var(i)));
        }
        return total / static_cast<LD>(B);
      };
      nn::Vec<LD> flat = p.flat().cast<LD>();
      const LD h = 1e-5L;
      std::uniform_int_distribution<Eigen::Index> pick(0, flat.size() - 1);
      for (int c = 0; c < coords; ++c) {
        const Eigen::Index k = pick(rng);
        const LD keep = flat(k);
        flat(k) = keep + h;
        const LD up = loss_at(flat);
        flat(k) = keep - h;
        const LD dn = loss_at(flat);
        flat(k) = keep;
        const double fd = static_cast<double>((up - dn) / (2 * h));
        const double a = analytic(k);
        const double scale = std::max(std::abs(fd), std::abs(a));
        // Tiny gradients are compared absolutely at 1e-8.
        const double err = scale < 1e-8 ? (std::abs(fd - a) < 1e-8 ? 0.0 : 1.0) : std::abs(fd - a) / scale;
        worst = std::max(worst, err);
        ++checked;
      }
    }
  }
  return {"gradients", worst < 1e-4, fmt("worst relative error %.3g over %.0f coordinates", worst, checked)};
}

SelftestResult crps_suite(bool quick, std::uint64_t seed) {
  const int cases = quick ? 10 : 50;
  const int samples = quick ? 200000 : 1000000;
  double worst_z = 0.0;
  Rng rng(mix_seed(seed, "crps", 0));
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < cases; ++c) {
    const int k = c % 2 == 0 ? 1 : 1 + static_cast<int>(u(rng) * 6);
    Eigen::VectorXd mu(k), var(k);
    for (int i = 0; i < k; ++i) {
      mu(i) = z(rng);
      var(i) = std::exp(2.0 * u(rng) - 1.5);
    }
    const PredictiveDistribution dist(mu, var);
    const double y = 1.5 * z(rng);
    const double closed = scoring::crps_mixture(dist, y);
    std::uniform_int_distribution<int> comp(0, k - 1);
    auto draw = [&] {
      const int i = comp(rng);
      return mu(i) + std::sqrt(var(i)) * z(rng);
    };
    double sum = 0.0, sq = 0.0;
    for (int s = 0; s < samples; ++s) {
      const double x = draw(), x2 = draw();
      const double g = std::abs(x - y) - 0.5 * std::abs(x - x2);
      sum += g;
      sq += g * g;
    }
    const double mean = sum / samples;
    const double se = std::sqrt((sq / samples - mean * mean) / samples);
    worst_z = std::max(worst_z, std::abs(mean - closed) / se);
  }
  const double ref = scoring::crps_gaussian(0.0, 1.0, 0.0);
  const bool ok = worst_z < 3.0 && std::abs(ref - 0.2337) < 1e-3;
  return {"crps", ok, fmt("worst |closed - MC| = %.2f SE; crps(0,1,0) = %.6f", worst_z, ref)};
}

SelftestResult power_law_suite(std::uint64_t seed) {
  Rng rng(mix_seed(seed, "powerlaw", 0));
  std::uniform_real_distribution<double> ua(0.5, 3.0), uc(-4.0, 2.0);
  const std::vector<double> ns = {10, 20, 30, 50, 100, 200, 500, 1000, 2000};
  double worst = 0.0, worst_r2 = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double alpha = ua(rng), C = std::pow(10.0, uc(rng));
    std::vector<double> v;
    for (double n : ns) v.push_back(C * std::pow(n, -alpha));
    const auto fit = trajectory::fit_power_law(ns, v);
    worst = std::max({worst, std::abs(fit.alpha - alpha) / alpha, std::abs(fit.C - C) / C});
    worst_r2 = std::max(worst_r2, std::abs(1.0 - fit.r2));
  }
  return {"power-law", worst < 1e-10 && worst_r2 < 1e-12,
          fmt("worst relative error %.3g, worst |1 - R2| %.3g", worst, worst_r2)};
}

SelftestResult single_seed_suite(bool quick, std::uint64_t seed) {
  const int sets = quick ? 5 : 20;
  const int draws = 50000;
  Rng rng(mix_seed(seed, "singleseed", 0));
  std::uniform_real_distribution<double> spread(-0.12, 0.12);
  double worst = 0.0;
  for (int s = 0; s < sets; ++s) {
    std::vector<double> v(50);
    for (auto& x : v) x = 1.0 + spread(rng);
    const auto closed = reliability::single_seed_summary(v);
    std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
    double sq = 0.0;
    int within = 0;
    for (int d = 0; d < draws; ++d) {
      const double rel = (v[pick(rng)] - closed.mean) / closed.mean;
      sq += rel * rel;
      within += std::abs(rel) <= 0.1 ? 1 : 0;
    }
    const double sim_rmse = std::sqrt(sq / draws);
    const double sim_p = static_cast<double>(within) / draws;
    worst = std::max({worst, std::abs(sim_rmse - closed.rel_rmse) / closed.rel_rmse,
                      std::abs(sim_p - closed.p_within_10) / closed.p_within_10});
  }
  return {"single-seed", worst < 0.01, fmt("worst relative gap to 50,000-draw resampling %.4f", worst)};
}

// Exact one-sided p by enumerating every split of the pooled sample.
double mann_whitney_exact(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> all(a);
  all.insert(all.end(), b.begin(), b.end());
  const auto ranks = reliability::average_ranks(all);
  const std::size_t n = all.size(), k = a.size();
  double observed = 0.0;
  for (std::size_t i = 0; i < k; ++i) observed += ranks[i];
  std::vector<int> sel(n, 0);
  std::fill(sel.begin(), sel.begin() + static_cast<std::ptrdiff_t>(k), 1);
  std::sort(sel.begin(), sel.end());
  double hit = 0.0, total = 0.0;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (sel[i]) s += ranks[i];
    total += 1;
    if (s >= observed - 1e-9) hit += 1;
  } while (std::next_permutation(sel.begin(), sel.end()));
  return hit / total;
}

// Exact two-sided Spearman p for untied data via a DP over rank subsets.
double spearman_exact(double rho, std::size_t n) {
  const std::size_t max_s = n * (n * n - 1) / 3;
  std::vector<std::vector<double>> dp(std::size_t{1} << n);
  dp[0].assign(max_s + 1, 0.0);
  dp[0][0] = 1.0;
  for (std::size_t mask = 0; mask < dp.size(); ++mask) {
    if (dp[mask].empty()) continue;
    const auto i = static_cast<long>(std::popcount(mask));
    for (std::size_t j = 0; j < n; ++j) {
      if (mask >> j & 1) continue;
      auto& next = dp[mask | std::size_t{1} << j];
      if (next.empty()) next.assign(max_s + 1, 0.0);
      const auto step = static_cast<std::size_t>((i - static_cast<long>(j)) * (i - static_cast<long>(j)));
      for (std::size_t s = 0; s + step <= max_s; ++s) next[s + step] += dp[mask][s];
    }
    if (mask + 1 < dp.size()) dp[mask].clear();
  }
  const auto& full = dp.back();
  const double nn = static_cast<double>(n);
  double hit = 0.0, total = 0.0;
  for (std::size_t s = 0; s <= max_s; ++s) {
    total += full[s];
    const double r = 1.0 - 6.0 * static_cast<double>(s) / (nn * (nn * nn - 1.0));
    if (std::abs(r) >= std::abs(rho) - 1e-12) hit += full[s];
  }
  return hit / total;
}

SelftestResult rank_test_suite(bool quick, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "ranks", 0));
  std::normal_distribution<double> z(0.0, 1.0);
  double worst_mw = 0.0, worst_sp = 0.0;
  for (int c = 0; c < (quick ? 3 : 10); ++c) {
    std::vector<double> a(8), b(8);
    const double shift = 0.3 * c;
    for (auto& x : a) x = z(rng) + shift;
    for (auto& x : b) x = z(rng);
    worst_mw = std::max(worst_mw, std::abs(reliability::mann_whitney_one_sided(a, b) - mann_whitney_exact(a, b)));
  }
  for (std::size_t n : quick ? std::vector<std::size_t>{12} : std::vector<std::size_t>{12, 13, 14}) {
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = z(rng);
      y[i] = 0.5 * x[i] + z(rng);
    }
    const auto rep = reliability::spearman(x, y);
    worst_sp = std::max(worst_sp, std::abs(rep.p_value - spearman_exact(rep.rho, n)));
  }
  return {"rank-tests", worst_mw < 0.01 && worst_sp < 0.01,
          fmt("worst p gap: Mann-Whitney %.4f, Spearman %.4f", worst_mw, worst_sp)};
}

}  // namespace

std::vector<SelftestResult> run_selftest(bool quick, std::uint64_t seed) {
  std::vector<SelftestResult> out;
  out.push_back(gradient_suite(quick, seed));
  out.push_back(crps_suite(quick, seed));
  out.push_back(power_law_suite(seed));
  out.push_back(single_seed_suite(quick, seed));
  out.push_back(rank_test_suite(quick, seed));
  return out;
}

}  // namespace seedbench::cli
