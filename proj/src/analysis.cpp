#include "seedbench/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace seedbench::cli {
using nlohmann::json;

namespace {

std::vector<std::string> ordered_names(const json& manifest, const char* key, const std::set<std::string>& seen) {
  std::vector<std::string> out;
  if (manifest.contains("config") && manifest["config"].contains(key))
    for (const auto& e : manifest["config"][key]) {
      const auto name = e.at("name").get<std::string>();
      if (seen.count(name)) out.push_back(name);
    }
  for (const auto& s : seen)
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  return out;
}

std::string cell_name(const std::string& dataset, const std::string& method, std::size_t n) {
  return dataset + "/" + method + "/n=" + std::to_string(n);
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

json corr_json(const reliability::CorrelationReport& c) {
  return {{"rho", num(c.rho)}, {"p_value", num(c.p_value)}, {"pair_count", c.pair_count}};
}

reliability::CorrelationReport corr_from(const json& j) {
  return {num_from(j.at("rho")), num_from(j.at("p_value")), j.at("pair_count").get<std::size_t>()};
}

}  // namespace

AnalysisBundle analyze(const ResultsStore& store, const AnalysisOptions& options) {
  AnalysisBundle b;
  b.metric = options.metric;
  b.first_reps = options.first_reps;

  if (store.manifest.contains("config") && store.manifest["config"].contains("metrics")) {
    const auto& labels = store.manifest["config"]["metrics"];
    if (std::find(labels.begin(), labels.end(), json(options.metric)) == labels.end())
      throw ConfigError("metric '" + options.metric + "' was not recorded in this store");
  }

  std::set<std::string> dataset_set, method_set;
  // (dataset, method) -> n -> values in rep order
  std::map<std::pair<std::string, std::string>, std::map<std::size_t, std::vector<std::pair<std::size_t, double>>>>
      cells;
  for (const auto& [dataset, records] : store.by_dataset) {
    for (const auto& r : records) {
      if (r.skipped) continue;
      dataset_set.insert(r.dataset);
      method_set.insert(r.method);
      auto& bucket = cells[{r.dataset, r.method}][r.n];
      if (!r.valid) continue;
      if (options.first_reps > 0 && r.rep >= options.first_reps) continue;
      auto it = r.metrics.find(options.metric);
      if (it == r.metrics.end()) continue;
      bucket.emplace_back(r.rep, it->second);
    }
  }
  if (cells.empty()) {
    b.warnings.push_back("store holds no completed cells");
    return b;
  }

  const auto datasets = ordered_names(store.manifest, "datasets", dataset_set);
  const auto methods = ordered_names(store.manifest, "methods", method_set);

  for (const auto& ds : datasets) {
    for (const auto& m : methods) {
      auto found = cells.find({ds, m});
      if (found == cells.end()) continue;
      trajectory::TrajectoryRecord rec;
      rec.dataset = ds;
      rec.method = m;
      rec.metric = options.metric;
      for (auto& [n, vals] : found->second) {
        std::sort(vals.begin(), vals.end());
        trajectory::TrajectoryPoint pt;
        pt.n = n;
        for (const auto& [rep, v] : vals) pt.values.push_back(v);
        rec.points.push_back(std::move(pt));
      }

      TrajectoryFit tf;
      tf.dataset = ds;
      tf.method = m;
      const auto tv = trajectory::variances_of(rec);
      tf.ns = tv.ns;
      tf.variances = tv.variances;
      tf.flagged_n = tv.flagged_n;
      for (auto n : tf.flagged_n)
        b.warnings.push_back(cell_name(ds, m, n) + ": fewer than 2 valid values, excluded");

      if (tf.ns.size() >= 2) tf.monotone = trajectory::classify_monotone(tf.ns, tf.variances);
      const bool all_zero = !tf.variances.empty() &&
                            std::all_of(tf.variances.begin(), tf.variances.end(), [](double v) { return v == 0.0; });
      if (all_zero && tf.ns.size() >= 2) {
        tf.all_zero_variance = true;
        trajectory::PowerLawFit flat;
        flat.alpha = 0.0;
        flat.C = 0.0;
        flat.r2 = 1.0;
        flat.monotone = tf.monotone;
        flat.zero_variance_excluded = tf.variances.size();
        tf.fit = flat;
        tf.note = "all variances are zero";
      } else {
        try {
          tf.fit = trajectory::fit_power_law(tf.ns, tf.variances);
          tf.fit->monotone = tf.monotone;
          if (tf.fit->zero_variance_excluded > 0)
            b.warnings.push_back(ds + "/" + m + ": " + std::to_string(tf.fit->zero_variance_excluded) +
                                 " zero-variance point(s) excluded from the fit");
        } catch (const std::exception& e) {
          tf.note = e.what();
          b.warnings.push_back(ds + "/" + m + ": no power-law fit (" + tf.note + ")");
        }
      }

      for (const auto& pt : rec.points) {
        if (pt.values.size() < 2) continue;
        reliability::ReliabilityRow row;
        row.dataset = ds;
        row.method = m;
        row.n = pt.n;
        row.valid_count = pt.values.size();
        row.local_variance = trajectory::empirical_variance(pt.values);
        try {
          const auto s = reliability::single_seed_summary(pt.values);
          row.rel_rmse = s.rel_rmse;
          row.p_within_10 = s.p_within_10;
          row.mean_metric = s.mean;
        } catch (const std::domain_error&) {
          b.warnings.push_back(cell_name(ds, m, pt.n) + ": mean metric not positive, excluded from reliability rows");
          continue;
        }
        b.rows.push_back(row);
      }
      b.trajectories.push_back(std::move(rec));
      b.fits.push_back(std::move(tf));
    }
  }

  auto correlate = [&](const std::string& key, const std::vector<const reliability::ReliabilityRow*>& rows) {
    std::vector<double> x, y;
    for (const auto* r : rows) {
      x.push_back(r->local_variance);
      y.push_back(r->rel_rmse);
    }
    try {
      b.correlations[key] = reliability::spearman(x, y);
    } catch (const std::exception& e) {
      b.warnings.push_back("spearman " + key + ": " + e.what());
    }
  };

  std::vector<const reliability::ReliabilityRow*> all;
  for (const auto& r : b.rows) all.push_back(&r);
  for (const auto& ds : datasets) {
    std::vector<const reliability::ReliabilityRow*> sub;
    std::vector<reliability::ReliabilityRow> copy;
    for (const auto& r : b.rows)
      if (r.dataset == ds) {
        sub.push_back(&r);
        copy.push_back(r);
      }
    if (sub.empty()) continue;
    correlate(ds, sub);
    try {
      b.quartiles[ds] = reliability::quartile_analysis(copy);
    } catch (const std::exception& e) {
      b.warnings.push_back("quartiles " + ds + ": " + e.what());
    }
  }
  if (datasets.size() > 1) correlate("pooled", all);

  std::vector<reliability::ReliabilityRow> positive;
  for (const auto& r : b.rows)
    if (r.rel_rmse > 0.0 && r.local_variance > 0.0) positive.push_back(r);
  if (positive.size() < b.rows.size())
    b.warnings.push_back("fixed effects: " + std::to_string(b.rows.size() - positive.size()) +
                         " row(s) with zero rel_rmse or variance left out (log undefined)");
  try {
    b.fixed_effects = reliability::fixed_effects_fit(positive);
  } catch (const std::exception& e) {
    b.warnings.push_back(std::string("fixed effects: ") + e.what());
  }
  return b;
}

json to_json(const AnalysisBundle& b) {
  json j;
  j["schema_version"] = b.schema_version;
  j["metric"] = b.metric;
  j["first_reps"] = b.first_reps;
  j["trajectories"] = json::array();
  for (const auto& t : b.trajectories) {
    json pts = json::array();
    for (const auto& p : t.points) pts.push_back({{"n", p.n}, {"values", p.values}});
    j["trajectories"].push_back({{"dataset", t.dataset}, {"method", t.method}, {"metric", t.metric}, {"points", pts}});
  }
  j["fits"] = json::array();
  for (const auto& f : b.fits) {
    json e{{"dataset", f.dataset},     {"method", f.method},
           {"ns", f.ns},               {"variances", f.variances},
           {"flagged_n", f.flagged_n}, {"monotone", f.monotone},
           {"all_zero_variance", f.all_zero_variance}, {"note", f.note}};
    if (f.fit)
      e["fit"] = {{"alpha", num(f.fit->alpha)},
                  {"C", num(f.fit->C)},
                  {"r2", num(f.fit->r2)},
                  {"monotone", f.fit->monotone},
                  {"points_used", f.fit->points_used},
                  {"zero_variance_excluded", f.fit->zero_variance_excluded}};
    else
      e["fit"] = nullptr;
    j["fits"].push_back(e);
  }
  j["rows"] = json::array();
  for (const auto& r : b.rows)
    j["rows"].push_back({{"dataset", r.dataset},
                         {"method", r.method},
                         {"n", r.n},
                         {"local_variance", num(r.local_variance)},
                         {"rel_rmse", num(r.rel_rmse)},
                         {"p_within_10", num(r.p_within_10)},
                         {"mean_metric", num(r.mean_metric)},
                         {"valid_count", r.valid_count}});
  j["correlations"] = json::object();
  for (const auto& [k, c] : b.correlations) j["correlations"][k] = corr_json(c);
  j["quartiles"] = json::object();
  for (const auto& [k, q] : b.quartiles)
    j["quartiles"][k] = {{"q_means", {num(q.q_means[0]), num(q.q_means[1]), num(q.q_means[2]), num(q.q_means[3])}},
                         {"q_counts", {q.q_counts[0], q.q_counts[1], q.q_counts[2], q.q_counts[3]}},
                         {"high_var_mean", num(q.high_var_mean)},
                         {"rest_mean", num(q.rest_mean)},
                         {"ratio", num(q.ratio)},
                         {"mw_p", num(q.mw_p)},
                         {"monotone_across_quartiles", q.monotone_across_quartiles}};
  if (b.fixed_effects) {
    const auto& f = *b.fixed_effects;
    json dummies = json::object();
    for (std::size_t i = 0; i < f.dummy_names.size(); ++i) dummies[f.dummy_names[i]] = num(f.dummy_coefficients[i]);
    j["fixed_effects"] = {{"slope", num(f.slope)},       {"standard_error", num(f.standard_error)},
                          {"ci_low", num(f.ci_low)},     {"ci_high", num(f.ci_high)},
                          {"intercept", num(f.intercept)}, {"dummies", dummies},
                          {"observations", f.observations}, {"parameters", f.parameters}};
  } else {
    j["fixed_effects"] = nullptr;
  }
  j["warnings"] = b.warnings;
  return j;
}

AnalysisBundle bundle_from_json(const json& j) {
  AnalysisBundle b;
  b.schema_version = j.at("schema_version").get<int>();
  if (b.schema_version != kBundleSchemaVersion)
    throw ConfigError("bundle schema version " + std::to_string(b.schema_version) + " is not supported");
  b.metric = j.at("metric").get<std::string>();
  b.first_reps = j.at("first_reps").get<std::size_t>();
  for (const auto& t : j.at("trajectories")) {
    trajectory::TrajectoryRecord rec;
    rec.dataset = t.at("dataset").get<std::string>();
    rec.method = t.at("method").get<std::string>();
    rec.metric = t.at("metric").get<std::string>();
    for (const auto& p : t.at("points")) rec.points.push_back({p.at("n").get<std::size_t>(), p.at("values").get<std::vector<double>>()});
    b.trajectories.push_back(std::move(rec));
  }
  for (const auto& e : j.at("fits")) {
    TrajectoryFit f;
    f.dataset = e.at("dataset").get<std::string>();
    f.method = e.at("method").get<std::string>();
    f.ns = e.at("ns").get<std::vector<double>>();
    f.variances = e.at("variances").get<std::vector<double>>();
    f.flagged_n = e.at("flagged_n").get<std::vector<std::size_t>>();
    f.monotone = e.at("monotone").get<bool>();
    f.all_zero_variance = e.at("all_zero_variance").get<bool>();
    f.note = e.at("note").get<std::string>();
    if (!e.at("fit").is_null()) {
      const auto& p = e.at("fit");
      trajectory::PowerLawFit fit;
      fit.alpha = num_from(p.at("alpha"));
      fit.C = num_from(p.at("C"));
      fit.r2 = num_from(p.at("r2"));
      fit.monotone = p.at("monotone").get<bool>();
      fit.points_used = p.at("points_used").get<std::size_t>();
      fit.zero_variance_excluded = p.at("zero_variance_excluded").get<std::size_t>();
      f.fit = fit;
    }
    b.fits.push_back(std::move(f));
  }
  for (const auto& r : j.at("rows")) {
    reliability::ReliabilityRow row;
    row.dataset = r.at("dataset").get<std::string>();
    row.method = r.at("method").get<std::string>();
    row.n = r.at("n").get<std::size_t>();
    row.local_variance = num_from(r.at("local_variance"));
    row.rel_rmse = num_from(r.at("rel_rmse"));
    row.p_within_10 = num_from(r.at("p_within_10"));
    row.mean_metric = num_from(r.at("mean_metric"));
    row.valid_count = r.at("valid_count").get<std::size_t>();
    b.rows.push_back(std::move(row));
  }
  for (const auto& [k, c] : j.at("correlations").items()) b.correlations[k] = corr_from(c);
  for (const auto& [k, q] : j.at("quartiles").items()) {
    reliability::QuartileReport rep;
    for (int i = 0; i < 4; ++i) {
      rep.q_means[i] = num_from(q.at("q_means")[static_cast<std::size_t>(i)]);
      rep.q_counts[i] = q.at("q_counts")[static_cast<std::size_t>(i)].get<std::size_t>();
    }
    rep.high_var_mean = num_from(q.at("high_var_mean"));
    rep.rest_mean = num_from(q.at("rest_mean"));
    rep.ratio = num_from(q.at("ratio"));
    rep.mw_p = num_from(q.at("mw_p"));
    rep.monotone_across_quartiles = q.at("monotone_across_quartiles").get<bool>();
    b.quartiles[k] = rep;
  }
  if (!j.at("fixed_effects").is_null()) {
    const auto& f = j.at("fixed_effects");
    reliability::FixedEffectsFit fe;
    fe.slope = num_from(f.at("slope"));
    fe.standard_error = num_from(f.at("standard_error"));
    fe.ci_low = num_from(f.at("ci_low"));
    fe.ci_high = num_from(f.at("ci_high"));
    fe.intercept = num_from(f.at("intercept"));
    for (const auto& [name, v] : f.at("dummies").items()) {
      fe.dummy_names.push_back(name);
      fe.dummy_coefficients.push_back(num_from(v));
    }
    fe.observations = f.at("observations").get<std::size_t>();
    fe.parameters = f.at("parameters").get<std::size_t>();
    b.fixed_effects = fe;
  }
  b.warnings = j.at("warnings").get<std::vector<std::string>>();
  return b;
}

}  // namespace seedbench::cli
