#include "seedbench/reliability.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace seedbench::reliability {
namespace {

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double upper_normal_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

SingleSeedSummary single_seed_summary(std::span<const double> values) {
  if (values.size() < 2) throw std::domain_error("single_seed_summary: need at least 2 values");
  SingleSeedSummary s;
  s.mean = mean_of(values);
  if (!(s.mean > 0.0)) throw std::domain_error("single_seed_summary: mean must be positive");
  double ss = 0.0;
  std::size_t within = 0;
  // Inclusive boundary, with a relative slack of 1e-12 so that values exactly
  // 10% away in decimal (e.g. 0.9 and 1.1 around 1.0) count as inside.
  const double bound = 0.1 * s.mean * (1.0 + 1e-12);
  for (double c : values) {
    ss += (c - s.mean) * (c - s.mean);
    if (std::abs(c - s.mean) <= bound) ++within;
  }
  const double r = static_cast<double>(values.size());
  s.rel_rmse = std::sqrt(ss / r) / s.mean;
  s.p_within_10 = static_cast<double>(within) / r;
  return s;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

CorrelationReport spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  if (x.size() < 3) throw std::domain_error("spearman: need at least 3 pairs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::domain_error("spearman: constant input");

  CorrelationReport rep;
  rep.pair_count = x.size();
  rep.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double k = static_cast<double>(x.size());
  if (std::abs(rep.rho) >= 1.0 || x.size() == 2) {
    rep.p_value = 1e-16;
    return rep;
  }
  const double t = rep.rho * std::sqrt((k - 2.0) / (1.0 - rep.rho * rep.rho));
  boost::math::students_t dist(k - 2.0);
  rep.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 1e-300, 1.0);
  return rep;
}

double mann_whitney_one_sided(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mann_whitney_one_sided: empty sample");
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  const auto ranks = average_ranks(all);

  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double n = na + nb;
  double rank_sum_a = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) rank_sum_a += ranks[i];
  const double u = rank_sum_a - na * (na + 1.0) / 2.0;

  std::map<double, double> tie_counts;
  for (double v : all) tie_counts[v] += 1.0;
  double tie_term = 0.0;
  for (const auto& [v, t] : tie_counts) tie_term += t * t * t - t;

  const double var = na * nb / 12.0 * ((n + 1.0) - (n > 1.0 ? tie_term / (n * (n - 1.0)) : 0.0));
  const double centered = u - na * nb / 2.0 - 0.5;
  if (!(var > 0.0)) return centered > 0.0 ? 0.0 : 1.0;
  return upper_normal_tail(centered / std::sqrt(var));
}

QuartileReport quartile_analysis(std::span<const ReliabilityRow> rows) {
  if (rows.size() < 8) throw std::domain_error("quartile_analysis: need at least 8 rows");
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].local_variance < rows[b].local_variance; });

  const std::size_t k = rows.size();
  const std::size_t top = (k + 3) / 4;
  const std::size_t rest = k - top;
  std::vector<double> high, low;
  double sums[4] = {0, 0, 0, 0};
  QuartileReport rep;
  for (std::size_t r = 0; r < k; ++r) {
    const double v = rows[idx[r]].rel_rmse;
    const std::size_t q = r >= rest ? 3 : (3 * r) / rest;
    sums[q] += v;
    ++rep.q_counts[q];
    (q == 3 ? high : low).push_back(v);
  }
  for (int q = 0; q < 4; ++q) rep.q_means[q] = rep.q_counts[q] ? sums[q] / static_cast<double>(rep.q_counts[q]) : 0.0;
  rep.high_var_mean = mean_of(high);
  rep.rest_mean = mean_of(low);
  rep.ratio = rep.rest_mean > 0.0 ? rep.high_var_mean / rep.rest_mean
                                  : (rep.high_var_mean == rep.rest_mean ? 1.0 : INFINITY);
  rep.mw_p = mann_whitney_one_sided(high, low);
  rep.monotone_across_quartiles =
      rep.q_means[0] <= rep.q_means[1] && rep.q_means[1] <= rep.q_means[2] && rep.q_means[2] <= rep.q_means[3];
  return rep;
}

FixedEffectsFit fixed_effects_fit(std::span<const ReliabilityRow> rows) {
  std::set<std::string> datasets, methods;
  for (const auto& r : rows) {
    if (!(r.rel_rmse > 0.0) || !(r.local_variance > 0.0))
      throw std::domain_error("fixed_effects_fit: rel_rmse and local_variance must be positive");
    datasets.insert(r.dataset);
    methods.insert(r.method);
  }

  FixedEffectsFit fit;
  std::vector<std::string> columns = {"intercept", "log_local_variance"};
  for (auto it = std::next(datasets.begin(), datasets.empty() ? 0 : 1); it != datasets.end(); ++it)
    columns.push_back("dataset=" + *it);
  for (auto it = std::next(methods.begin(), methods.empty() ? 0 : 1); it != methods.end(); ++it)
    columns.push_back("method=" + *it);

  const auto k = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(columns.size());
  if (k <= p)
    throw std::domain_error("fixed_effects_fit: need more observations (" + std::to_string(k) + ") than parameters (" +
                            std::to_string(p) + ")");

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(k, p);
  Eigen::VectorXd y(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    X(i, 0) = 1.0;
    X(i, 1) = std::log(r.local_variance);
    y(i) = std::log(r.rel_rmse);
    for (Eigen::Index c = 2; c < p; ++c) {
      const auto& name = columns[static_cast<std::size_t>(c)];
      if (name == "dataset=" + r.dataset || name == "method=" + r.method) X(i, c) = 1.0;
    }
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < p) {
    // Name the columns that add nothing to the span of the ones before them.
    std::string bad;
    Eigen::MatrixXd kept(k, 0);
    for (Eigen::Index c = 0; c < p; ++c) {
      Eigen::MatrixXd trial(k, kept.cols() + 1);
      trial << kept, X.col(c);
      if (Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(trial).rank() == kept.cols()) {
        bad += (bad.empty() ? "" : ", ") + columns[static_cast<std::size_t>(c)];
      } else {
        kept = trial;
      }
    }
    throw std::runtime_error("fixed_effects_fit: rank-deficient design; offending columns: " + bad);
  }

  const Eigen::VectorXd beta = qr.solve(y);
  const double ss_res = (y - X * beta).squaredNorm();
  const double sigma2 = ss_res / static_cast<double>(k - p);
  const Eigen::MatrixXd cov = sigma2 * (X.transpose() * X).inverse();

  fit.intercept = beta(0);
  fit.slope = beta(1);
  fit.standard_error = std::sqrt(cov(1, 1));
  fit.ci_low = fit.slope - 1.96 * fit.standard_error;
  fit.ci_high = fit.slope + 1.96 * fit.standard_error;
  for (Eigen::Index c = 2; c < p; ++c) {
    fit.dummy_names.push_back(columns[static_cast<std::size_t>(c)]);
    fit.dummy_coefficients.push_back(beta(c));
  }
  fit.observations = static_cast<std::size_t>(k);
  fit.parameters = static_cast<std::size_t>(p);
  return fit;
}

}  // namespace seedbench::reliability
