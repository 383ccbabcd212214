#include "seedbench/trajectory.hpp"

#include <algorithm>
#include <cmath>

namespace seedbench::trajectory {

void TrajectoryRecord::validate() const {
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].n <= points[i - 1].n)
      throw std::invalid_argument("trajectory " + method + "/" + dataset + ": sizes must be strictly increasing");
}

double empirical_variance(std::span<const double> values) {
  if (values.size() < 2) throw InsufficientData("empirical_variance: need at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size() - 1);
}

PowerLawFit fit_power_law(std::span<const double> ns, std::span<const double> variances) {
  if (ns.size() != variances.size()) throw std::invalid_argument("fit_power_law: length mismatch");
  PowerLawFit fit;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (variances[i] > 0.0) {
      lx.push_back(std::log(ns[i]));
      ly.push_back(std::log(variances[i]));
    } else {
      ++fit.zero_variance_excluded;
    }
  }
  if (lx.size() < 3) throw InsufficientData("fit_power_law: fewer than 3 points with positive variance");
  fit.points_used = lx.size();

  const double k = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw InsufficientData("fit_power_law: training sizes are not distinct");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - (intercept + slope * lx[i]);
    ss_res += e * e;
  }
  fit.alpha = -slope;
  fit.C = std::exp(intercept);
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.monotone = classify_monotone(ns, variances);
  return fit;
}

bool classify_monotone(std::span<const double> ns, std::span<const double> variances) {
  if (ns.size() != variances.size() || variances.size() < 2)
    throw std::invalid_argument("classify_monotone: need at least 2 matching points");
  // max_element returns the first maximum, i.e. ties go to the smallest n.
  return std::max_element(variances.begin(), variances.end()) == variances.begin();
}

TrajectoryVariances variances_of(const TrajectoryRecord& rec, std::size_t first_reps) {
  rec.validate();
  TrajectoryVariances out;
  for (const auto& p : rec.points) {
    std::span<const double> vals(p.values);
    if (first_reps > 0 && vals.size() > first_reps) vals = vals.first(first_reps);
    if (vals.size() < 2) {
      out.flagged_n.push_back(p.n);
      continue;
    }
    out.ns.push_back(static_cast<double>(p.n));
    out.variances.push_back(empirical_variance(vals));
  }
  return out;
}

}  // namespace seedbench::trajectory
