#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace seedbench::trajectory {

class InsufficientData : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct TrajectoryPoint {
  std::size_t n = 0;
  std::vector<double> values;  // valid endpoint metric values, one per realization
  std::size_t valid_count() const { return values.size(); }
};

struct TrajectoryRecord {
  std::string method;
  std::string dataset;
  std::string metric;
  std::vector<TrajectoryPoint> points;  // strictly increasing n

  void validate() const;
};

struct PowerLawFit {
  double alpha = 0.0;
  double C = 0.0;
  double r2 = 0.0;
  bool monotone = false;
  std::size_t points_used = 0;
  std::size_t zero_variance_excluded = 0;
};

/// Unbiased sample variance (denominator R - 1). Throws InsufficientData for
/// fewer than two values.
double empirical_variance(std::span<const double> values);

/// OLS of log v on log n: slope = -alpha, intercept = log C. Zero-variance
/// points are excluded and counted. Needs >= 3 positive variances.
/// SS_tot = 0 gives r2 = 1. `monotone` is classify_monotone over all points.
PowerLawFit fit_power_law(std::span<const double> ns, std::span<const double> variances);

/// Monotone iff the argmax of the variances (ties to the smallest n) sits at
/// the smallest n. Inputs must be ordered by increasing n.
bool classify_monotone(std::span<const double> ns, std::span<const double> variances);

struct TrajectoryVariances {
  std::vector<double> ns;
  std::vector<double> variances;
  std::vector<std::size_t> flagged_n;  // cells with < 2 valid values
};

/// Per-point unbiased variances. When `first_reps` is non-zero only the first
/// `first_reps` values of each point are used.
TrajectoryVariances variances_of(const TrajectoryRecord& rec, std::size_t first_reps = 0);

}  // namespace seedbench::trajectory
