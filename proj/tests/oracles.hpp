#pragma once

// Brute-force reference computations shared by the unit tests and the
// acceptance binary. None of these call into the code they check, apart from
// the forward pass used to pick a kink-free evaluation point.

#include "seedbench/nn.hpp"
#include "seedbench/predictive.hpp"
#include "seedbench/seeding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using seedbench::Rng;

// ---------------------------------------------------------------------------
// Finite-difference gradients

struct GradientPoint {
  seedbench::nn::MLPParams<double> params;
  Eigen::MatrixXd X;  // d x B
  Eigen::VectorXd y;
};

/// Random parameters and batch with no pre-activation within 1e-3 of a ReLU
/// kink and the log-variance well inside the clamp, so central differences
/// with h = 1e-5 never straddle a non-differentiable point.
inline GradientPoint draw_gradient_point(std::uint64_t seed, Eigen::Index d = 3, Eigen::Index B = 5) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  GradientPoint g;
  g.X.resize(d, B);
  g.y.resize(B);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    g.params = seedbench::nn::he_uniform_init<double>(d, rng());
    for (Eigen::Index i = 0; i < seedbench::nn::kHidden; ++i) {
      g.params.b1()(i) = 0.1 * z(rng);
      g.params.b2()(i) = 0.1 * z(rng);
    }
    g.params.b3()(0) = 0.3 * z(rng);
    g.params.b3()(1) = 0.3 * z(rng);
    for (Eigen::Index i = 0; i < g.X.size(); ++i) g.X.data()[i] = z(rng);
    for (Eigen::Index i = 0; i < B; ++i) g.y(i) = z(rng);
    const auto f = seedbench::nn::forward_batch<double>(g.params, g.X);
    const bool kink = (f.pre1.array().abs() < 1e-3).any() || (f.pre2.array().abs() < 1e-3).any();
    const bool clamped = (f.raw_logvar.array().abs() > 6.0).any();
    if (!kink && !clamped) return g;
  }
  throw std::runtime_error("draw_gradient_point: no kink-free point found");
}

/// Mean loss in long double, written out from the definitions. `weights`
/// multiplies each example's NLL (the frozen var^beta for beta-NLL).
inline long double reference_loss(const Eigen::Index d, const Eigen::Matrix<long double, -1, 1>& flat,
                                  const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const std::vector<long double>& weights) {
  using LD = long double;
  const Eigen::Index H = seedbench::nn::kHidden;
  const LD* w = flat.data();
  const LD* W1 = w;
  const LD* b1 = W1 + H * d;
  const LD* W2 = b1 + H;
  const LD* b2 = W2 + H * H;
  const LD* W3 = b2 + H;
  const LD* b3 = W3 + 2 * H;
  LD total = 0;
  std::vector<LD> h1(static_cast<std::size_t>(H)), h2(static_cast<std::size_t>(H));
  for (Eigen::Index e = 0; e < X.cols(); ++e) {
    // Column-major weight blocks: element (i, j) sits at j * rows + i.
    for (Eigen::Index i = 0; i < H; ++i) {
      LD s = b1[i];
      for (Eigen::Index j = 0; j < d; ++j) s += W1[j * H + i] * static_cast<LD>(X(j, e));
      h1[static_cast<std::size_t>(i)] = s > 0 ? s : 0;
    }
    for (Eigen::Index i = 0; i < H; ++i) {
      LD s = b2[i];
      for (Eigen::Index j = 0; j < H; ++j) s += W2[j * H + i] * h1[static_cast<std::size_t>(j)];
      h2[static_cast<std::size_t>(i)] = s > 0 ? s : 0;
    }
    LD mu = b3[0], raw = b3[1];
    for (Eigen::Index j = 0; j < H; ++j) {
      mu += W3[j * 2 + 0] * h2[static_cast<std::size_t>(j)];
      raw += W3[j * 2 + 1] * h2[static_cast<std::size_t>(j)];
    }
    const LD var = std::clamp(std::exp(raw), 1e-3L, 1e3L);
    const LD r = static_cast<LD>(y(e)) - mu;
    total += weights[static_cast<std::size_t>(e)] * (0.5L * std::log(var) + r * r / (2 * var));
  }
  return total / static_cast<LD>(X.cols());
}

/// Worst relative disagreement between `analytic` and central differences over
/// the listed coordinates. Gradients below 1e-8 in magnitude are compared
/// absolutely at 1e-8 (a miss counts as error 1).
inline double fd_worst_error(const GradientPoint& g, const Eigen::VectorXd& analytic,
                             const seedbench::nn::LossSpec& spec, const std::vector<Eigen::Index>& coords) {
  using LD = long double;
  const Eigen::Index B = g.X.cols();
  std::vector<LD> weights(static_cast<std::size_t>(B), 1.0L);
  if (spec.kind == seedbench::nn::LossKind::BetaNll) {
    const auto f = seedbench::nn::forward_batch<double>(g.params, g.X);
    for (Eigen::Index i = 0; i < B; ++i)
      weights[static_cast<std::size_t>(i)] = std::pow(static_cast<LD>(f.var(i)), static_cast<LD>(spec.beta));
  }
  Eigen::Matrix<LD, -1, 1> flat = g.params.flat().cast<LD>();
  const LD h = 1e-5L;
  double worst = 0.0;
  for (const Eigen::Index k : coords) {
    const LD keep = flat(k);
    flat(k) = keep + h;
    const LD up = reference_loss(g.params.input_dim(), flat, g.X, g.y, weights);
    flat(k) = keep - h;
    const LD dn = reference_loss(g.params.input_dim(), flat, g.X, g.y, weights);
    flat(k) = keep;
    const double fd = static_cast<double>((up - dn) / (2 * h));
    const double a = analytic(k);
    const double scale = std::max(std::abs(fd), std::abs(a));
    const double err = scale < 1e-8 ? (std::abs(fd - a) <= 1e-8 ? 0.0 : 1.0) : std::abs(fd - a) / scale;
    worst = std::max(worst, err);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Monte-Carlo CRPS: E|X - y| - 1/2 E|X - X'|

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

inline McEstimate mc_crps(const seedbench::PredictiveDistribution& d, double y, std::size_t samples, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<Eigen::Index> comp(0, d.size() - 1);
  auto draw = [&] {
    const Eigen::Index i = comp(rng);
    return d.mu(i) + std::sqrt(d.var(i)) * z(rng);
  };
  double sum = 0.0, sq = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double x = draw(), x2 = draw();
    const double g = std::abs(x - y) - 0.5 * std::abs(x - x2);
    sum += g;
    sq += g * g;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, sq / n - mean * mean) / (n - 1.0))};
}

// ---------------------------------------------------------------------------
// Rank tests

/// Exact one-sided Mann-Whitney p = P(U >= U_obs) over every assignment of
/// the pooled sample to groups of the original sizes. U counts pairs a > b
/// with ties as 1/2; no ranks involved.
inline double mann_whitney_exact(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> all(a);
  all.insert(all.end(), b.begin(), b.end());
  const std::size_t n = all.size(), k = a.size();
  auto u_of = [&](const std::vector<char>& in_a) {
    double u = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_a[i]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (in_a[j]) continue;
        u += all[i] > all[j] ? 1.0 : (all[i] == all[j] ? 0.5 : 0.0);
      }
    }
    return u;
  };
  std::vector<char> sel(n, 0);
  std::fill(sel.begin(), sel.begin() + static_cast<std::ptrdiff_t>(k), 1);
  const double observed = u_of(sel);
  std::sort(sel.begin(), sel.end());
  double hit = 0.0, total = 0.0;
  do {
    total += 1.0;
    if (u_of(sel) >= observed - 1e-9) hit += 1.0;
  } while (std::next_permutation(sel.begin(), sel.end()));
  return hit / total;
}

/// Number of permutations of 1..k for each value of sum d^2, by dynamic
/// programming over which ranks have been used. Within one mask every partial
/// sum has the same parity (sum of i - j over the pairs so far), so only
/// every second slot is stored. Layers are processed by popcount and freed as
/// soon as they are consumed to bound memory.
inline std::vector<double> spearman_null_counts(std::size_t k) {
  const std::size_t max_s = k * (k * k - 1) / 3;
  const std::size_t masks = std::size_t{1} << k;
  auto parity = [](std::size_t mask, std::size_t layer) {
    std::size_t s = layer * (layer - (layer > 0 ? 1 : 0)) / 2;  // 0 + 1 + ... + (layer - 1)
    for (std::size_t j = 0; mask >> j; ++j) s += (mask >> j & 1) * j;
    return s % 2;
  };
  std::vector<std::vector<double>> dp(masks);
  dp[0].assign(max_s / 2 + 1, 0.0);
  dp[0][0] = 1.0;
  for (std::size_t layer = 0; layer < k; ++layer) {
    for (std::size_t mask = 0; mask < masks; ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != layer || dp[mask].empty()) continue;
      const std::size_t par = parity(mask, layer);
      for (std::size_t j = 0; j < k; ++j) {
        if (mask >> j & 1) continue;
        auto& next = dp[mask | std::size_t{1} << j];
        if (next.empty()) next.assign(max_s / 2 + 1, 0.0);
        const long diff = static_cast<long>(layer) - static_cast<long>(j);
        const auto step = static_cast<std::size_t>(diff * diff);
        for (std::size_t h = 0; h < dp[mask].size(); ++h) {
          if (dp[mask][h] == 0.0) continue;
          const std::size_t total = 2 * h + par + step;
          if (total <= max_s) next[total / 2] += dp[mask][h];
        }
      }
      std::vector<double>().swap(dp[mask]);
    }
  }
  // The full mask has even parity: slot h holds sum d^2 = 2h.
  return dp[masks - 1];
}

inline double spearman_exact_p(double rho, std::size_t k) {
  static std::vector<std::vector<double>> cache(32);
  if (cache[k].empty()) cache[k] = spearman_null_counts(k);
  const auto& counts = cache[k];
  const double kk = static_cast<double>(k);
  double hit = 0.0, total = 0.0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    total += counts[s];
    const double r = 1.0 - 12.0 * static_cast<double>(s) / (kk * (kk * kk - 1.0));
    if (std::abs(r) >= std::abs(rho) - 1e-12) hit += counts[s];
  }
  return hit / total;
}

/// Rank correlation of untied data from 1 - 6 sum d^2 / (k (k^2 - 1)).
inline double spearman_rho_untied(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t k = x.size();
  auto ranks = [k](const std::vector<double>& v) {
    std::vector<double> r(k);
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t below = 0;
      for (std::size_t j = 0; j < k; ++j) below += v[j] < v[i] ? 1 : 0;
      r[i] = static_cast<double>(below + 1);
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  double d2 = 0.0;
  for (std::size_t i = 0; i < k; ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  const double kk = static_cast<double>(k);
  return 1.0 - 6.0 * d2 / (kk * (kk * kk - 1.0));
}

// ---------------------------------------------------------------------------
// Single-seed protocol: pick one run with replacement, many times.

struct ResampledSummary {
  double rel_rmse = 0.0;
  double p_within_10 = 0.0;
};

inline ResampledSummary resample_single_seed(const std::vector<double>& values, std::size_t draws, Rng& rng) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  double sq = 0.0;
  std::size_t within = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    const double rel = (values[pick(rng)] - mean) / mean;
    sq += rel * rel;
    within += std::abs(rel) <= 0.1 + 1e-12 ? 1 : 0;
  }
  return {std::sqrt(sq / static_cast<double>(draws)),
          static_cast<double>(within) / static_cast<double>(draws)};
}

}  // namespace oracle
