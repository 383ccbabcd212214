#pragma once

#include "seedbench/data.hpp"
#include "seedbench/nn.hpp"
#include "seedbench/predictive.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace seedbench::methods {

using Params = nn::MLPParams<double>;

enum class MethodKind { Map, MapBetaNll, MapRestarts, Ensemble, McDropout, Bbb };

std::string to_string(MethodKind k);
MethodKind parse_method_kind(const std::string& s);

enum class KlWeightMode {
  PerExample,  // KL / |train| added to the mean per-example NLL
  Off,         // variational posterior without the KL penalty (diagnostic)
};

struct MethodConfig {
  MethodKind kind = MethodKind::Map;
  std::string name;  // identifier in results; defaults to to_string(kind)
  int epochs = 500;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  int batch_size = 32;  // full batch when the training set is smaller
  int ensemble_size = 5;
  int samples = 50;  // T for MC dropout and BBB
  double dropout_rate = 0.1;
  double beta = 0.5;
  int restarts = 1;
  double validation_frac = 0.2;  // restart selection split
  double prior_std = 1.0;
  double posterior_init_std = 0.05;
  KlWeightMode kl_weight_mode = KlWeightMode::PerExample;

  /// Defaults for the kind: 500 epochs (BBB 1000), wd 1e-5 (BBB 0), M=5,
  /// T=50, beta=0.5, dropout 0.1.
  static MethodConfig defaults(MethodKind kind);
  void validate() const;
};

/// Columns are examples: inputs is d x n.
struct TrainingSet {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd targets;

  static TrainingSet from(const data::RegressionDataset& ds);
  Eigen::Index size() const { return targets.size(); }
};

/// Training outcome. Invalid runs carry the epoch at which the loss (or a
/// gradient) became non-finite; they are recorded, never silently dropped.
template <typename Model>
struct TrainResult {
  Model model;
  bool valid = true;
  std::optional<int> invalid_epoch;
  std::string reason;
};

/// Mean-field Gaussian posterior over every network weight. The standard
/// deviation is softplus(rho).
struct VariationalParams {
  Eigen::Index input_dim = 0;
  Eigen::VectorXd mean;
  Eigen::VectorXd rho;

  Eigen::VectorXd stddev() const;
  Params mean_network() const { return Params(input_dim, mean); }
  Params sample(Rng& rng) const;
  static double softplus_inverse(double s);
};

TrainResult<Params> train_map(const TrainingSet& data, const MethodConfig& config, std::uint64_t seed);
TrainResult<Params> train_map_restarts(const TrainingSet& data, const MethodConfig& config,
                                       std::uint64_t seed);
std::uint64_t ensemble_member_seed(std::uint64_t seed, int member);
TrainResult<std::vector<Params>> train_ensemble(const TrainingSet& data, const MethodConfig& config,
                                                std::uint64_t seed);
/// MAP training with per-example dropout masks active.
TrainResult<Params> train_mc_dropout(const TrainingSet& data, const MethodConfig& config, std::uint64_t seed);
TrainResult<VariationalParams> train_bbb(const TrainingSet& data, const MethodConfig& config,
                                         std::uint64_t seed);

/// Per-restart seeds and validation mean CRPS; empty when restarts == 1.
struct RestartReport {
  std::vector<std::uint64_t> seeds;
  std::vector<double> validation_crps;
  std::size_t chosen = 0;
};
TrainResult<Params> train_map_restarts(const TrainingSet& data, const MethodConfig& config,
                                       std::uint64_t seed, RestartReport* report);

/// sum_w log(p/s_w) + (s_w^2 + m_w^2) / (2 p^2) - 1/2
double kl_mean_field_gaussian(const Eigen::Ref<const Eigen::VectorXd>& post_mu,
                              const Eigen::Ref<const Eigen::VectorXd>& post_std, double prior_std);

/// inputs: d x N. Results have one mixture per column.
PredictiveSet predict_map(const Params& params, const Eigen::MatrixXd& inputs);
PredictiveSet predict_ensemble(const std::vector<Params>& members, const Eigen::MatrixXd& inputs);
/// Component t uses the mask seeded by mix_seed(eval_seed, "mask", t), shared
/// by every input.
PredictiveSet predict_mc_dropout(const Params& params, const Eigen::MatrixXd& inputs, int samples, double rate,
                                 std::uint64_t eval_seed);
/// Sample t draws one weight vector from q with mix_seed(eval_seed, "weights", t),
/// shared by every input.
PredictiveSet predict_bbb(const VariationalParams& vparams, const Eigen::MatrixXd& inputs, int samples,
                          std::uint64_t eval_seed);

using TrainedModel = std::variant<Params, std::vector<Params>, VariationalParams>;

/// Dispatches on config.kind.
TrainResult<TrainedModel> train(const TrainingSet& data, const MethodConfig& config, std::uint64_t seed);
PredictiveSet predict(const TrainedModel& model, const MethodConfig& config, const Eigen::MatrixXd& inputs,
                      std::uint64_t eval_seed);

}  // namespace seedbench::methods
