#include "seedbench/methods.hpp"

#include "seedbench/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace seedbench::methods {
namespace {

using nn::LossKind;
using nn::LossSpec;

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename Model>
TrainResult<Model> invalid(Model model, int epoch, const std::string& why) {
  TrainResult<Model> r{std::move(model), false, epoch, why};
  return r;
}

// Iterates shuffled mini-batches; full batch when the set is smaller than the
// configured batch size.
class BatchStream {
 public:
  BatchStream(const TrainingSet& data, int batch_size, std::uint64_t seed)
      : data_(data), rng_(seed), order_(static_cast<std::size_t>(data.size())) {
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    batch_ = std::min<Eigen::Index>(batch_size, data.size());
  }

  void shuffle() { std::shuffle(order_.begin(), order_.end(), rng_); }
  Eigen::Index batches() const { return (data_.size() + batch_ - 1) / batch_; }

  void gather(Eigen::Index b, Eigen::MatrixXd& X, Eigen::VectorXd& y) const {
    const Eigen::Index start = b * batch_;
    const Eigen::Index count = std::min(batch_, data_.size() - start);
    X.resize(data_.inputs.rows(), count);
    y.resize(count);
    for (Eigen::Index j = 0; j < count; ++j) {
      const Eigen::Index src = order_[static_cast<std::size_t>(start + j)];
      X.col(j) = data_.inputs.col(src);
      y(j) = data_.targets(src);
    }
  }

 private:
  const TrainingSet& data_;
  Rng rng_;
  std::vector<Eigen::Index> order_;
  Eigen::Index batch_ = 1;
};

TrainResult<Params> train_network(const TrainingSet& data, const MethodConfig& cfg, std::uint64_t seed,
                                  const LossSpec& loss, double dropout_rate) {
  if (data.size() < 2) throw std::invalid_argument("training requires at least 2 examples");
  Params p = nn::he_uniform_init<double>(data.inputs.rows(), mix_seed(seed, "init", 0));
  nn::AdamState<double> state(p.size());
  BatchStream stream(data, cfg.batch_size, mix_seed(seed, "shuffle", 0));
  Rng mask_rng(mix_seed(seed, "dropout", 0));

  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    stream.shuffle();
    for (Eigen::Index b = 0; b < stream.batches(); ++b) {
      stream.gather(b, X, y);
      try {
        nn::BackwardResult<double> r =
            dropout_rate > 0.0
                ? nn::backward<double>(p, X, y, loss, nn::make_batch_mask<double>(dropout_rate, X.cols(), mask_rng))
                : nn::backward<double>(p, X, y, loss);
        nn::adam_step(p, r.grads, state, cfg.lr, cfg.weight_decay);
        if (!p.flat().allFinite()) throw nn::NumericalError("non-finite parameters after update");
      } catch (const nn::NumericalError& e) {
        return invalid(std::move(p), epoch, e.what());
      }
    }
  }
  return {std::move(p), true, std::nullopt, {}};
}

LossSpec loss_for(const MethodConfig& cfg) {
  if (cfg.kind == MethodKind::MapBetaNll) return {LossKind::BetaNll, cfg.beta};
  return {LossKind::Nll, 0.0};
}

TrainingSet take_columns(const TrainingSet& data, std::span<const Eigen::Index> cols) {
  TrainingSet out;
  out.inputs.resize(data.inputs.rows(), static_cast<Eigen::Index>(cols.size()));
  out.targets.resize(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.inputs.col(static_cast<Eigen::Index>(j)) = data.inputs.col(cols[j]);
    out.targets(static_cast<Eigen::Index>(j)) = data.targets(cols[j]);
  }
  return out;
}

double mean_crps(const PredictiveSet& preds, const Eigen::VectorXd& y) {
  return scoring::mean_metric(preds, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                              scoring::MetricKind{})
      .mean;
}

}  // namespace

std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::Map: return "MAP";
    case MethodKind::MapBetaNll: return "MAP_BETA_NLL";
    case MethodKind::MapRestarts: return "MAP_RESTARTS";
    case MethodKind::Ensemble: return "ENSEMBLE";
    case MethodKind::McDropout: return "MC_DROPOUT";
    case MethodKind::Bbb: return "BBB";
  }
  return "?";
}

MethodKind parse_method_kind(const std::string& s) {
  for (auto k : {MethodKind::Map, MethodKind::MapBetaNll, MethodKind::MapRestarts, MethodKind::Ensemble,
                 MethodKind::McDropout, MethodKind::Bbb})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown method kind '" + s + "'");
}

MethodConfig MethodConfig::defaults(MethodKind kind) {
  MethodConfig c;
  c.kind = kind;
  c.name = to_string(kind);
  if (kind == MethodKind::Bbb) {
    c.epochs = 1000;
    c.weight_decay = 0.0;
  }
  if (kind == MethodKind::MapRestarts) c.restarts = 5;
  return c;
}

void MethodConfig::validate() const {
  auto fail = [this](const std::string& m) { throw std::invalid_argument("method " + name + ": " + m); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (ensemble_size < 1) fail("ensemble size must be >= 1");
  if (samples < 1) fail("samples must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout rate must be in [0, 1)");
  if (!(beta >= 0.0 && beta <= 1.0)) fail("beta must be in [0, 1]");
  if (restarts < 1) fail("restarts must be >= 1");
  if (!(validation_frac > 0.0 && validation_frac < 1.0)) fail("validation_frac must be in (0, 1)");
  if (!(prior_std > 0.0) || !(posterior_init_std > 0.0)) fail("prior/posterior std must be > 0");
}

TrainingSet TrainingSet::from(const data::RegressionDataset& ds) {
  return {ds.features.transpose(), ds.targets};
}

Eigen::VectorXd VariationalParams::stddev() const { return rho.unaryExpr([](double r) { return softplus(r); }); }

Params VariationalParams::sample(Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd w(mean.size());
  const Eigen::VectorXd sd = stddev();
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = mean(i) + sd(i) * normal(rng);
  return Params(input_dim, std::move(w));
}

double VariationalParams::softplus_inverse(double s) { return s + std::log(-std::expm1(-s)); }

TrainResult<Params> train_map(const TrainingSet& data, const MethodConfig& config, std::uint64_t seed) {
  config.validate();
  return train_network(data, config, seed, loss_for(config), 0.0);
}

TrainResult<Params> train_mc_dropout(const TrainingSet& data, const MethodConfig& config, std::uint64_t seed) {
  config.validate();
  return train_network(data, config, seed, {LossKind::Nll, 0.0}, config.dropout_rate);
}

TrainResult<Params> train_map_restarts(const TrainingSet& data, const MethodConfig& config, std::uint64_t seed) {
  return train_map_restarts(data, config, seed, nullptr);
}

TrainResult<Params> train_map_restarts(const TrainingSet& data, const MethodConfig& config, std::uint64_t seed,
                                       RestartReport* report) {
  config.validate();
  const LossSpec loss{LossKind::Nll, 0.0};
  // Nothing to select between: identical to plain MAP on the full draw.
  if (config.restarts == 1) return train_network(data, config, seed, loss, 0.0);

  const Eigen::Index n = data.size();
  const auto n_val = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::llround(config.validation_frac * static_cast<double>(n))), 1, n - 2);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng split_rng(mix_seed(seed, "validation", 0));
  std::shuffle(perm.begin(), perm.end(), split_rng);
  const auto split = static_cast<std::ptrdiff_t>(n - n_val);
  const TrainingSet fit = take_columns(data, std::span(perm.begin(), perm.begin() + split));
  const TrainingSet val = take_columns(data, std::span(perm.begin() + split, perm.end()));

  RestartReport local;
  std::optional<TrainResult<Params>> best;
  double best_score = std::numeric_limits<double>::infinity();
  TrainResult<Params> last_invalid;
  for (int k = 0; k < config.restarts; ++k) {
    const std::uint64_t s = mix_seed(seed, restart_purpose(k), static_cast<std::uint64_t>(k));
    local.seeds.push_back(s);
    auto run = train_network(fit, config, s, loss, 0.0);
    if (!run.valid) {
      local.validation_crps.push_back(std::numeric_limits<double>::quiet_NaN());
      last_invalid = std::move(run);
      continue;
    }
    const double score = mean_crps(predict_map(run.model, val.inputs), val.targets);
    local.validation_crps.push_back(score);
    if (score < best_score) {
      best_score = score;
      local.chosen = static_cast<std::size_t>(k);
      best = std::move(run);
    }
  }
  if (report) *report = local;
  if (!best) {
    last_invalid.reason = "all restarts invalid: " + last_invalid.reason;
    return last_invalid;
  }
  return std::move(*best);
}

std::uint64_t ensemble_member_seed(std::uint64_t seed, int member) {
  return mix_seed(seed, "member", static_cast<std::uint64_t>(member));
}

TrainResult<std::vector<Params>> train_ensemble(const TrainingSet& data, const MethodConfig& config,
                                                std::uint64_t seed) {
  config.validate();
  TrainResult<std::vector<Params>> out;
  for (int m = 0; m < config.ensemble_size; ++m) {
    auto member = train_network(data, config, ensemble_member_seed(seed, m), {LossKind::Nll, 0.0}, 0.0);
    if (!member.valid) {
      out.valid = false;
      out.invalid_epoch = member.invalid_epoch;
      out.reason = "member " + std::to_string(m) + ": " + member.reason;
      return out;
    }
    out.model.push_back(std::move(member.model));
  }
  return out;
}

double kl_mean_field_gaussian(const Eigen::Ref<const Eigen::VectorXd>& post_mu,
                              const Eigen::Ref<const Eigen::VectorXd>& post_std, double prior_std) {
  if (!(prior_std > 0.0) || !(post_std.array() > 0.0).all())
    throw std::invalid_argument("kl_mean_field_gaussian: standard deviations must be > 0");
  const double p2 = prior_std * prior_std;
  return ((prior_std / post_std.array()).log() + (post_std.array().square() + post_mu.array().square()) / (2.0 * p2) -
          0.5)
      .sum();
}

TrainResult<VariationalParams> train_bbb(const TrainingSet& data, const MethodConfig& config, std::uint64_t seed) {
  config.validate();
  if (data.size() < 2) throw std::invalid_argument("training requires at least 2 examples");
  const Eigen::Index d = data.inputs.rows();

  VariationalParams q;
  q.input_dim = d;
  q.mean = nn::he_uniform_init<double>(d, mix_seed(seed, "init", 0)).flat();
  q.rho = Eigen::VectorXd::Constant(q.mean.size(), VariationalParams::softplus_inverse(config.posterior_init_std));

  nn::AdamState<double> mean_state(q.mean.size());
  nn::AdamState<double> rho_state(q.rho.size());
  BatchStream stream(data, config.batch_size, mix_seed(seed, "shuffle", 0));
  Rng noise_rng(mix_seed(seed, "weights", 0));
  std::normal_distribution<double> normal(0.0, 1.0);

  const double kl_weight =
      config.kl_weight_mode == KlWeightMode::PerExample ? 1.0 / static_cast<double>(data.size()) : 0.0;
  const double p2 = config.prior_std * config.prior_std;
  const LossSpec loss{LossKind::Nll, 0.0};

  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd eps(q.mean.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    stream.shuffle();
    for (Eigen::Index b = 0; b < stream.batches(); ++b) {
      stream.gather(b, X, y);
      for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = normal(noise_rng);
      const Eigen::VectorXd sd = q.stddev();
      try {
        const Params w(d, q.mean + sd.cwiseProduct(eps));
        const auto r = nn::backward<double>(w, X, y, loss);
        const double kl = kl_weight > 0.0 ? kl_mean_field_gaussian(q.mean, sd, config.prior_std) : 0.0;
        if (!std::isfinite(r.loss + kl_weight * kl)) throw nn::NumericalError("non-finite ELBO");

        const Eigen::VectorXd& gw = r.grads.flat();
        Eigen::VectorXd g_mean = gw + kl_weight * q.mean / p2;
        Eigen::VectorXd g_sd = gw.cwiseProduct(eps) +
                               kl_weight * (sd.array().inverse() * -1.0 + sd.array() / p2).matrix();
        Eigen::VectorXd g_rho = g_sd.cwiseProduct(q.rho.unaryExpr([](double v) { return sigmoid(v); }));
        nn::adam_step(q.mean, g_mean, mean_state, config.lr, config.weight_decay);
        nn::adam_step(q.rho, g_rho, rho_state, config.lr, config.weight_decay);
        if (!q.mean.allFinite() || !q.rho.allFinite())
          throw nn::NumericalError("non-finite variational parameters");
      } catch (const nn::NumericalError& e) {
        return invalid(std::move(q), epoch, e.what());
      }
    }
  }
  return {std::move(q), true, std::nullopt, {}};
}

PredictiveSet predict_map(const Params& params, const Eigen::MatrixXd& inputs) {
  const auto f = nn::forward_batch<double>(params, inputs);
  return assemble_mixtures(f.mu, f.var);
}

PredictiveSet predict_ensemble(const std::vector<Params>& members, const Eigen::MatrixXd& inputs) {
  if (members.empty()) throw std::invalid_argument("predict_ensemble: no members");
  Eigen::MatrixXd mu(inputs.cols(), static_cast<Eigen::Index>(members.size()));
  Eigen::MatrixXd var(mu.rows(), mu.cols());
  for (std::size_t m = 0; m < members.size(); ++m) {
    const auto f = nn::forward_batch<double>(members[m], inputs);
    mu.col(static_cast<Eigen::Index>(m)) = f.mu;
    var.col(static_cast<Eigen::Index>(m)) = f.var;
  }
  return assemble_mixtures(mu, var);
}

PredictiveSet predict_mc_dropout(const Params& params, const Eigen::MatrixXd& inputs, int samples, double rate,
                                 std::uint64_t eval_seed) {
  if (samples < 1) throw std::invalid_argument("predict_mc_dropout: samples must be >= 1");
  Eigen::MatrixXd mu(inputs.cols(), samples);
  Eigen::MatrixXd var(mu.rows(), samples);
  for (int t = 0; t < samples; ++t) {
    const auto mask = nn::make_dropout_mask<double>(rate, mix_seed(eval_seed, "mask", static_cast<std::uint64_t>(t)));
    const auto f = nn::forward_batch<double>(params, inputs, mask);
    mu.col(t) = f.mu;
    var.col(t) = f.var;
  }
  return assemble_mixtures(mu, var);
}

PredictiveSet predict_bbb(const VariationalParams& vparams, const Eigen::MatrixXd& inputs, int samples,
                          std::uint64_t eval_seed) {
  if (samples < 1) throw std::invalid_argument("predict_bbb: samples must be >= 1");
  Eigen::MatrixXd mu(inputs.cols(), samples);
  Eigen::MatrixXd var(mu.rows(), samples);
  for (int t = 0; t < samples; ++t) {
    Rng rng(mix_seed(eval_seed, "weights", static_cast<std::uint64_t>(t)));
    const auto f = nn::forward_batch<double>(vparams.sample(rng), inputs);
    mu.col(t) = f.mu;
    var.col(t) = f.var;
  }
  return assemble_mixtures(mu, var);
}

TrainResult<TrainedModel> train(const TrainingSet& data, const MethodConfig& config, std::uint64_t seed) {
  auto wrap = [](auto r) {
    return TrainResult<TrainedModel>{TrainedModel(std::move(r.model)), r.valid, r.invalid_epoch, r.reason};
  };
  switch (config.kind) {
    case MethodKind::Map:
    case MethodKind::MapBetaNll: return wrap(train_map(data, config, seed));
    case MethodKind::MapRestarts: return wrap(train_map_restarts(data, config, seed));
    case MethodKind::Ensemble: return wrap(train_ensemble(data, config, seed));
    case MethodKind::McDropout: return wrap(train_mc_dropout(data, config, seed));
    case MethodKind::Bbb: return wrap(train_bbb(data, config, seed));
  }
  throw std::logic_error("unhandled method kind");
}

PredictiveSet predict(const TrainedModel& model, const MethodConfig& config, const Eigen::MatrixXd& inputs,
                      std::uint64_t eval_seed) {
  switch (config.kind) {
    case MethodKind::Map:
    case MethodKind::MapBetaNll:
    case MethodKind::MapRestarts: return predict_map(std::get<Params>(model), inputs);
    case MethodKind::Ensemble: return predict_ensemble(std::get<std::vector<Params>>(model), inputs);
    case MethodKind::McDropout:
      return predict_mc_dropout(std::get<Params>(model), inputs, config.samples, config.dropout_rate, eval_seed);
    case MethodKind::Bbb: return predict_bbb(std::get<VariationalParams>(model), inputs, config.samples, eval_seed);
  }
  throw std::logic_error("unhandled method kind");
}

}  // namespace seedbench::methods
