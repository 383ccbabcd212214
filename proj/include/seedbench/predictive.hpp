#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace seedbench {

/// Uniform-weight Gaussian mixture: component i is N(mu(i), var(i)) with
/// weight 1/K.
struct PredictiveDistribution {
  Eigen::VectorXd mu;
  Eigen::VectorXd var;

  PredictiveDistribution() = default;
  PredictiveDistribution(Eigen::VectorXd m, Eigen::VectorXd v) : mu(std::move(m)), var(std::move(v)) {
    if (mu.size() != var.size() || mu.size() < 1)
      throw std::invalid_argument("PredictiveDistribution: need K >= 1 matching components");
  }
  static PredictiveDistribution gaussian(double m, double v) {
    return {Eigen::VectorXd::Constant(1, m), Eigen::VectorXd::Constant(1, v)};
  }

  Eigen::Index size() const { return mu.size(); }
  double weight() const { return 1.0 / static_cast<double>(mu.size()); }
};

/// True when every component variance lies in the network clamp range
/// [1e-3, 1e3] and all entries are finite.
bool within_clamp_range(const PredictiveDistribution& d);

/// Mixtures for a whole test set, one per test example.
using PredictiveSet = std::vector<PredictiveDistribution>;

/// Assembles per-example mixtures from K component columns: mu and var are
/// N x K, component k of example i is (mu(i,k), var(i,k)).
PredictiveSet assemble_mixtures(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& var);

}  // namespace seedbench
