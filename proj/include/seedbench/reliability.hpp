#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace seedbench::reliability {

/// Relative self-estimation error of one realization drawn from the R
/// repeated-run values.
struct SingleSeedSummary {
  double rel_rmse = 0.0;     // sqrt((1/R) sum (c_r - mean)^2) / mean
  double p_within_10 = 0.0;  // fraction with |c_r - mean| / mean <= 0.1
  double mean = 0.0;
};

/// Closed form over the empirical distribution (the infinite-resample limit).
/// Throws std::domain_error when R < 2 or the mean is not positive.
SingleSeedSummary single_seed_summary(std::span<const double> values);

struct ReliabilityRow {
  std::string method;
  std::string dataset;
  std::size_t n = 0;
  double local_variance = 0.0;  // unbiased, across realizations
  double rel_rmse = 0.0;
  double p_within_10 = 0.0;
  double mean_metric = 0.0;
  std::size_t valid_count = 0;
};

struct CorrelationReport {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t pair_count = 0;
};

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

/// Spearman rho (Pearson correlation of average ranks) with a two-sided p from
/// t = rho sqrt((k-2)/(1-rho^2)) on k-2 degrees of freedom. |rho| = 1 gives
/// p = 1e-16. Throws std::domain_error for constant input or k < 3.
CorrelationReport spearman(std::span<const double> x, std::span<const double> y);

/// One-sided Mann-Whitney p for "a is stochastically greater than b": normal
/// approximation with tie-corrected variance and continuity correction.
double mann_whitney_one_sided(std::span<const double> a, std::span<const double> b);

struct QuartileReport {
  double q_means[4] = {0, 0, 0, 0};  // Q1 (lowest local variance) .. Q4
  std::size_t q_counts[4] = {0, 0, 0, 0};
  double high_var_mean = 0.0;  // Q4
  double rest_mean = 0.0;      // Q1..Q3
  double ratio = 0.0;
  double mw_p = 1.0;
  bool monotone_across_quartiles = false;  // Q1 <= Q2 <= Q3 <= Q4
};

/// Rows ranked by local variance (ties keep input order). Q4 is the top
/// ceil(k/4) rows; the remaining rows are split evenly by rank into Q1..Q3.
/// Requires at least 8 rows.
QuartileReport quartile_analysis(std::span<const ReliabilityRow> rows);

struct FixedEffectsFit {
  double slope = 0.0;
  double standard_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double intercept = 0.0;
  std::vector<std::string> dummy_names;  // "dataset=<name>" / "method=<name>"
  std::vector<double> dummy_coefficients;
  std::size_t observations = 0;
  std::size_t parameters = 0;
};

/// OLS of log(rel_rmse) on log(local_variance) plus dataset and method
/// indicators (first level of each factor, in sorted order, is the
/// reference). SE from sigma^2 (X'X)^-1 with sigma^2 = SS_res / (k - p);
/// CI = slope +- 1.96 SE. Rank deficiency throws std::runtime_error naming
/// the offending columns.
FixedEffectsFit fixed_effects_fit(std::span<const ReliabilityRow> rows);

}  // namespace seedbench::reliability
