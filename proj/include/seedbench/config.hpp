#pragma once

#include "seedbench/data.hpp"
#include "seedbench/methods.hpp"
#include "seedbench/scoring.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace seedbench::cli {

/// Bad or inconsistent configuration (exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Environment variable that overrides `cache_dir` from the config file.
inline constexpr const char* kCacheDirEnv = "SEEDBENCH_CACHE_DIR";

struct ExperimentConfig {
  std::uint64_t base_seed = 0;
  std::vector<data::DatasetSpec> datasets;
  std::vector<methods::MethodConfig> methods;
  std::vector<std::size_t> sizes = {10, 20, 30, 50, 100, 200, 500, 1000, 2000};
  std::size_t repetitions = 50;
  std::vector<scoring::MetricKind> metrics = {scoring::MetricKind{}};
  double test_frac = 0.3;
  unsigned workers = 1;  // scheduling hint only, never affects results
  std::filesystem::path output_dir = "results";
  std::filesystem::path cache_dir = "cache";

  void validate() const;
};

/// Parses the JSON document. Relative paths (dataset files, output_dir,
/// cache_dir) are resolved against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

/// Reads and parses a config file, then applies the cache-dir override from
/// the environment.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON form. Round-trips through parse_config.
nlohmann::json to_json(const ExperimentConfig& cfg);

/// to_json without workers, output_dir, cache_dir and local file paths.
nlohmann::json canonical_json(const ExperimentConfig& cfg);

/// SHA-256 over every field that influences results. workers, output_dir and
/// cache_dir are excluded.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace seedbench::cli
