#include "seedbench/config.hpp"

#include "seedbench/fetch.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>

namespace seedbench::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.is_relative() && !base.empty() ? base / p : p;
}

data::ColumnRef column_from(const json& j, const std::string& where) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_unsigned()) return j.get<std::size_t>();
  throw ConfigError(where + ": column must be a name or a non-negative index");
}

json column_to(const data::ColumnRef& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  return std::get<std::size_t>(c);
}

data::DataSource source_from(const std::string& s, const std::string& where) {
  if (s == "synthetic") return data::DataSource::Synthetic;
  if (s == "local-file") return data::DataSource::LocalFile;
  if (s == "remote-url") return data::DataSource::RemoteUrl;
  throw ConfigError(where + ": unknown source '" + s + "'");
}

const char* source_to(data::DataSource s) {
  switch (s) {
    case data::DataSource::Synthetic: return "synthetic";
    case data::DataSource::LocalFile: return "local-file";
    case data::DataSource::RemoteUrl: return "remote-url";
  }
  return "?";
}

bool safe_identifier(const std::string& s) {
  if (s.empty() || s[0] == '.') return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}

data::DatasetSpec dataset_from(const json& j, const fs::path& base) {
  if (!j.is_object()) throw ConfigError("datasets: each entry must be an object");
  data::DatasetSpec s;
  read_opt(j, "name", s.name, "dataset");
  const std::string where = "dataset '" + s.name + "'";
  reject_unknown(j, {"name", "source", "url", "checksum", "path", "target_column", "feature_columns",
                     "expected_rows", "synthetic"},
                 where);
  std::string source = "synthetic";
  read_opt(j, "source", source, where);
  s.source = source_from(source, where);
  if (j.contains("url")) s.url = j.at("url").get<std::string>();
  if (j.contains("checksum")) s.checksum = j.at("checksum").get<std::string>();
  if (j.contains("path")) s.path = resolve(j.at("path").get<std::string>(), base);
  if (j.contains("target_column")) s.target_column = column_from(j.at("target_column"), where);
  if (j.contains("feature_columns")) {
    if (!j.at("feature_columns").is_array()) throw ConfigError(where + ": feature_columns must be a list");
    for (const auto& c : j.at("feature_columns")) s.feature_columns.push_back(column_from(c, where));
  }
  if (j.contains("expected_rows")) s.expected_rows = j.at("expected_rows").get<std::size_t>();
  if (j.contains("synthetic")) {
    const auto& g = j.at("synthetic");
    reject_unknown(g, {"seed", "count", "features"}, where + ".synthetic");
    read_opt(g, "seed", s.synthetic.seed, where);
    read_opt(g, "count", s.synthetic.count, where);
    read_opt(g, "features", s.synthetic.features, where);
  }
  return s;
}

json dataset_to(const data::DatasetSpec& s, bool with_path) {
  json j{{"name", s.name}, {"source", source_to(s.source)}};
  if (s.source == data::DataSource::Synthetic) {
    j["synthetic"] = {{"seed", s.synthetic.seed}, {"count", s.synthetic.count}, {"features", s.synthetic.features}};
    return j;
  }
  if (s.url) j["url"] = *s.url;
  if (s.checksum) j["checksum"] = *s.checksum;
  if (s.path && with_path) j["path"] = s.path->string();
  j["target_column"] = column_to(s.target_column);
  j["feature_columns"] = json::array();
  for (const auto& c : s.feature_columns) j["feature_columns"].push_back(column_to(c));
  if (s.expected_rows) j["expected_rows"] = *s.expected_rows;
  return j;
}

methods::MethodConfig method_from(const json& j) {
  if (j.is_string()) return methods::MethodConfig::defaults(methods::parse_method_kind(j.get<std::string>()));
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("methods: entry needs a 'kind'");
  methods::MethodConfig m;
  try {
    m = methods::MethodConfig::defaults(methods::parse_method_kind(j.at("kind").get<std::string>()));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("methods: ") + e.what());
  }
  read_opt(j, "name", m.name, "method");
  const std::string where = "method '" + m.name + "'";
  reject_unknown(j, {"kind", "name", "epochs", "lr", "weight_decay", "batch_size", "ensemble_size", "samples",
                     "dropout_rate", "beta", "restarts", "validation_frac", "prior_std", "posterior_init_std",
                     "kl_weight"},
                 where);
  read_opt(j, "epochs", m.epochs, where);
  read_opt(j, "lr", m.lr, where);
  read_opt(j, "weight_decay", m.weight_decay, where);
  read_opt(j, "batch_size", m.batch_size, where);
  read_opt(j, "ensemble_size", m.ensemble_size, where);
  read_opt(j, "samples", m.samples, where);
  read_opt(j, "dropout_rate", m.dropout_rate, where);
  read_opt(j, "beta", m.beta, where);
  read_opt(j, "restarts", m.restarts, where);
  read_opt(j, "validation_frac", m.validation_frac, where);
  read_opt(j, "prior_std", m.prior_std, where);
  read_opt(j, "posterior_init_std", m.posterior_init_std, where);
  if (j.contains("kl_weight")) {
    const auto v = j.at("kl_weight").get<std::string>();
    if (v == "per-example") m.kl_weight_mode = methods::KlWeightMode::PerExample;
    else if (v == "off") m.kl_weight_mode = methods::KlWeightMode::Off;
    else throw ConfigError(where + ": kl_weight must be 'per-example' or 'off'");
  }
  return m;
}

json method_to(const methods::MethodConfig& m) {
  return {{"kind", methods::to_string(m.kind)},
          {"name", m.name},
          {"epochs", m.epochs},
          {"lr", m.lr},
          {"weight_decay", m.weight_decay},
          {"batch_size", m.batch_size},
          {"ensemble_size", m.ensemble_size},
          {"samples", m.samples},
          {"dropout_rate", m.dropout_rate},
          {"beta", m.beta},
          {"restarts", m.restarts},
          {"validation_frac", m.validation_frac},
          {"prior_std", m.prior_std},
          {"posterior_init_std", m.posterior_init_std},
          {"kl_weight", m.kl_weight_mode == methods::KlWeightMode::Off ? "off" : "per-example"}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (datasets.empty()) throw ConfigError("config: no datasets");
  if (methods.empty()) throw ConfigError("config: no methods");
  if (sizes.empty()) throw ConfigError("config: no training sizes");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 2) throw ConfigError("config: training sizes must be >= 2");
    if (i > 0 && sizes[i] <= sizes[i - 1]) throw ConfigError("config: sizes must be strictly increasing");
  }
  if (repetitions < 2) throw ConfigError("config: repetitions must be >= 2");
  if (metrics.empty()) throw ConfigError("config: no metrics");
  if (!(test_frac > 0.0 && test_frac < 1.0)) throw ConfigError("config: test_frac must be in (0, 1)");
  if (workers < 1) throw ConfigError("config: workers must be >= 1");

  std::set<std::string> names;
  for (const auto& d : datasets) {
    if (!safe_identifier(d.name)) throw ConfigError("config: dataset name '" + d.name + "' is not a safe identifier");
    if (!names.insert(d.name).second) throw ConfigError("config: duplicate dataset '" + d.name + "'");
    try {
      d.validate();
    } catch (const data::DataError& e) {
      throw ConfigError(e.what());
    }
  }
  names.clear();
  for (const auto& m : methods) {
    if (m.name.empty() || m.name == "-") throw ConfigError("config: method name must be non-empty and not '-'");
    if (!names.insert(m.name).second) throw ConfigError("config: duplicate method '" + m.name + "'");
    try {
      m.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  names.clear();
  for (const auto& k : metrics)
    if (!names.insert(k.label()).second) throw ConfigError("config: duplicate metric '" + k.label() + "'");
}

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown(doc, {"base_seed", "datasets", "methods", "sizes", "repetitions", "metrics", "test_frac", "workers",
                       "output_dir", "cache_dir"},
                 "config");
  ExperimentConfig cfg;
  read_opt(doc, "base_seed", cfg.base_seed, "config");
  read_opt(doc, "sizes", cfg.sizes, "config");
  read_opt(doc, "repetitions", cfg.repetitions, "config");
  read_opt(doc, "test_frac", cfg.test_frac, "config");
  read_opt(doc, "workers", cfg.workers, "config");
  if (doc.contains("output_dir")) cfg.output_dir = doc.at("output_dir").get<std::string>();
  if (doc.contains("cache_dir")) cfg.cache_dir = doc.at("cache_dir").get<std::string>();
  cfg.output_dir = resolve(cfg.output_dir, base_dir);
  cfg.cache_dir = resolve(cfg.cache_dir, base_dir);

  try {
    if (doc.contains("datasets"))
      for (const auto& d : doc.at("datasets")) cfg.datasets.push_back(dataset_from(d, base_dir));
    if (doc.contains("methods"))
      for (const auto& m : doc.at("methods")) cfg.methods.push_back(method_from(m));
    if (doc.contains("metrics")) {
      cfg.metrics.clear();
      for (const auto& m : doc.at("metrics")) cfg.metrics.push_back(scoring::MetricKind::parse(m.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::logic_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto cfg = parse_config(doc, path.parent_path());
  if (const char* env = std::getenv(kCacheDirEnv); env && *env) cfg.cache_dir = env;
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["base_seed"] = cfg.base_seed;
  j["datasets"] = json::array();
  for (const auto& d : cfg.datasets) j["datasets"].push_back(dataset_to(d, true));
  j["methods"] = json::array();
  for (const auto& m : cfg.methods) j["methods"].push_back(method_to(m));
  j["sizes"] = cfg.sizes;
  j["repetitions"] = cfg.repetitions;
  j["metrics"] = json::array();
  for (const auto& m : cfg.metrics) j["metrics"].push_back(m.label());
  j["test_frac"] = cfg.test_frac;
  j["workers"] = cfg.workers;
  j["output_dir"] = cfg.output_dir.string();
  j["cache_dir"] = cfg.cache_dir.string();
  return j;
}

nlohmann::json canonical_json(const ExperimentConfig& cfg) {
  // Local file locations are left out (the bytes are covered by the
  // manifest's dataset digests), so a moved checkout still resumes.
  json j = to_json(cfg);
  j.erase("workers");
  j.erase("output_dir");
  j.erase("cache_dir");
  j["datasets"] = json::array();
  for (const auto& d : cfg.datasets) j["datasets"].push_back(dataset_to(d, false));
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) { return data::sha256_hex(canonical_json(cfg).dump()); }

}  // namespace seedbench::cli
