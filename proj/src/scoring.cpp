#include "seedbench/scoring.hpp"

#include "seedbench/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace seedbench {

bool within_clamp_range(const PredictiveDistribution& d) {
  return d.mu.allFinite() && d.var.allFinite() && (d.var.array() >= nn::kVarMin).all() &&
         (d.var.array() <= nn::kVarMax).all();
}

PredictiveSet assemble_mixtures(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& var) {
  PredictiveSet out;
  out.reserve(static_cast<std::size_t>(mu.rows()));
  for (Eigen::Index i = 0; i < mu.rows(); ++i) out.emplace_back(mu.row(i).transpose(), var.row(i).transpose());
  return out;
}

namespace scoring {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kInvSqrtPi = 0.56418958354775628695;

double std_normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
double std_normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

// A(m, s^2) with s given directly.
double pair_term(double m, double s) {
  const double z = m / s;
  return m * std::erf(z * kInvSqrt2) + 2.0 * s * std_normal_pdf(z);
}

}  // namespace

std::string MetricKind::label() const {
  std::string base;
  switch (type) {
    case MetricType::Crps: return "crps";
    case MetricType::Nll: return "nll";
    case MetricType::IntervalScore: base = "interval_score"; break;
    case MetricType::Picp: base = "picp"; break;
  }
  if (interval_level == 0.90) return base;
  char buf[32];
  std::snprintf(buf, sizeof buf, "@%g", interval_level);
  return base + buf;
}

MetricKind MetricKind::parse(const std::string& label) {
  MetricKind k;
  std::string base = label;
  if (auto at = label.find('@'); at != std::string::npos) {
    base = label.substr(0, at);
    k.interval_level = std::stod(label.substr(at + 1));
  }
  if (base == "crps") k.type = MetricType::Crps;
  else if (base == "nll") k.type = MetricType::Nll;
  else if (base == "interval_score") k.type = MetricType::IntervalScore;
  else if (base == "picp") k.type = MetricType::Picp;
  else throw std::invalid_argument("unknown metric '" + label + "'");
  if (!(k.interval_level > 0.0 && k.interval_level < 1.0))
    throw std::invalid_argument("interval level must be in (0, 1)");
  return k;
}

double crps_gaussian(double mu, double sigma, double y) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("crps_gaussian: sigma must be > 0");
  const double z = (y - mu) / sigma;
  return sigma * (z * std::erf(z * kInvSqrt2) + 2.0 * std_normal_pdf(z) - kInvSqrtPi);
}

double crps_mixture(const PredictiveDistribution& dist, double y) {
  const Eigen::Index k = dist.size();
  if (k == 1) return crps_gaussian(dist.mu(0), std::sqrt(dist.var(0)), y);
  const double w = dist.weight();

  double obs = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) obs += pair_term(y - dist.mu(i), std::sqrt(dist.var(i)));

  // Spread term: diagonal A(0, 2 var_i) = 2 sqrt(2 var_i) phi(0), plus twice
  // each off-diagonal pair.
  double diag = 0.0;
  double off = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    diag += 2.0 * std::sqrt(2.0 * dist.var(i)) * kInvSqrt2Pi;
    for (Eigen::Index j = i + 1; j < k; ++j)
      off += pair_term(dist.mu(i) - dist.mu(j), std::sqrt(dist.var(i) + dist.var(j)));
  }
  return w * obs - 0.5 * w * w * (diag + 2.0 * off);
}

double nll_metric(const PredictiveDistribution& dist, double y, bool* underflow) {
  double density = 0.0;
  for (Eigen::Index i = 0; i < dist.size(); ++i) {
    const double sd = std::sqrt(dist.var(i));
    density += std_normal_pdf((y - dist.mu(i)) / sd) / sd;
  }
  density *= dist.weight();
  const bool clamped = !(density >= 1e-300);
  if (underflow) *underflow = clamped;
  return -std::log(clamped ? 1e-300 : density);
}

double mixture_cdf(const PredictiveDistribution& dist, double x) {
  double c = 0.0;
  for (Eigen::Index i = 0; i < dist.size(); ++i) c += std_normal_cdf((x - dist.mu(i)) / std::sqrt(dist.var(i)));
  return c * dist.weight();
}

double mixture_quantile(const PredictiveDistribution& dist, double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("mixture_quantile: p must be in (0, 1)");
  const Eigen::ArrayXd sd = dist.var.array().sqrt();
  double lo = (dist.mu.array() - 40.0 * sd).minCoeff();
  double hi = (dist.mu.array() + 40.0 * sd).maxCoeff();
  constexpr double kTol = 1e-10;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= kTol || mid == lo || mid == hi) return mid;
    if (mixture_cdf(dist, mid) < p) lo = mid;
    else hi = mid;
  }
  if (hi - lo <= kTol) return 0.5 * (lo + hi);
  throw std::runtime_error("mixture_quantile: bisection did not converge in 200 iterations");
}

Interval central_interval(const PredictiveDistribution& dist, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("interval level must be in (0, 1)");
  return {mixture_quantile(dist, 0.5 * (1.0 - level)), mixture_quantile(dist, 0.5 * (1.0 + level))};
}

double interval_score(const PredictiveDistribution& dist, double y, double level) {
  const Interval iv = central_interval(dist, level);
  const double alpha = 1.0 - level;
  double s = iv.upper - iv.lower;
  if (y < iv.lower) s += 2.0 / alpha * (iv.lower - y);
  if (y > iv.upper) s += 2.0 / alpha * (y - iv.upper);
  return s;
}

namespace {
bool covered(const PredictiveDistribution& d, double y, double level) {
  const Interval iv = central_interval(d, level);
  return iv.lower <= y && y <= iv.upper;
}
}  // namespace

double picp(std::span<const PredictiveDistribution> dists, std::span<const double> ys, double level) {
  if (dists.size() != ys.size() || dists.empty()) throw std::invalid_argument("picp: length mismatch or empty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < dists.size(); ++i) hits += covered(dists[i], ys[i], level) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(dists.size());
}

ScoreSummary mean_metric(std::span<const PredictiveDistribution> dists, std::span<const double> ys,
                         const MetricKind& kind, bool keep_per_example) {
  if (dists.size() != ys.size() || dists.empty())
    throw std::invalid_argument("mean_metric: need equal, non-zero lengths");
  ScoreSummary out;
  if (keep_per_example) out.per_example.reserve(dists.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    double s = 0.0;
    switch (kind.type) {
      case MetricType::Crps: s = crps_mixture(dists[i], ys[i]); break;
      case MetricType::Nll: {
        bool flag = false;
        s = nll_metric(dists[i], ys[i], &flag);
        out.flagged += flag ? 1 : 0;
        break;
      }
      case MetricType::IntervalScore: s = interval_score(dists[i], ys[i], kind.interval_level); break;
      case MetricType::Picp: s = covered(dists[i], ys[i], kind.interval_level) ? 1.0 : 0.0; break;
    }
    sum += s;
    if (keep_per_example) out.per_example.push_back(s);
  }
  out.mean = sum / static_cast<double>(dists.size());
  return out;
}

}  // namespace scoring
}  // namespace seedbench
