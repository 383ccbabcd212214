#pragma once

#include "seedbench/predictive.hpp"

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace seedbench::scoring {

enum class MetricType { Crps, Nll, IntervalScore, Picp };

struct MetricKind {
  MetricType type = MetricType::Crps;
  double interval_level = 0.90;

  /// "crps", "nll", "interval_score", "picp"; interval metrics carry their
  /// level when it is not the default, e.g. "picp@0.8".
  std::string label() const;
  static MetricKind parse(const std::string& label);
  bool operator==(const MetricKind&) const = default;
};

struct ScoreSummary {
  double mean = 0.0;
  std::vector<double> per_example;
  std::size_t flagged = 0;  // NLL examples whose density underflowed
};

/// Closed-form CRPS of N(mu, sigma^2) at y. Throws std::invalid_argument when
/// sigma <= 0.
double crps_gaussian(double mu, double sigma, double y);

/// Closed-form mixture CRPS: sum_i w_i A(y - mu_i, s_i^2)
///   - 1/2 sum_ij w_i w_j A(mu_i - mu_j, s_i^2 + s_j^2),
/// A(m, s^2) = m (2 Phi(m/s) - 1) + 2 s phi(m/s).
double crps_mixture(const PredictiveDistribution& dist, double y);

/// -log sum_i w_i N(y; mu_i, var_i), full density including the 2 pi term.
/// Densities below 1e-300 are clamped and reported through `underflow`.
double nll_metric(const PredictiveDistribution& dist, double y, bool* underflow = nullptr);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Mixture CDF at x.
double mixture_cdf(const PredictiveDistribution& dist, double x);

/// Quantile by bisection on the mixture CDF (tolerance 1e-10, at most 200
/// iterations, std::runtime_error otherwise).
double mixture_quantile(const PredictiveDistribution& dist, double p);

/// Central interval at (1-level)/2 and (1+level)/2.
Interval central_interval(const PredictiveDistribution& dist, double level);

/// (u - l) + (2/a)(l - y)[y < l] + (2/a)(y - u)[y > u], a = 1 - level.
double interval_score(const PredictiveDistribution& dist, double y, double level);

/// Fraction of examples with l <= y <= u.
double picp(std::span<const PredictiveDistribution> dists, std::span<const double> ys, double level);

/// Arithmetic mean of the per-example metric over the test set.
ScoreSummary mean_metric(std::span<const PredictiveDistribution> dists, std::span<const double> ys,
                         const MetricKind& kind, bool keep_per_example = false);

}  // namespace seedbench::scoring
