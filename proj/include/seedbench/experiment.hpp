#pragma once

#include "seedbench/config.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace seedbench::cli {

inline constexpr int kStoreSchemaVersion = 1;

/// One (dataset, method, n, rep) cell. Skipped cells (n larger than the pool)
/// are stored too, so every grid cell has exactly one record.
struct RunResult {
  std::string dataset;
  std::string method;
  std::size_t n = 0;
  std::size_t rep = 0;
  bool valid = false;
  bool skipped = false;
  std::string reason;
  std::optional<int> invalid_epoch;
  std::uint64_t draw_seed = 0;
  std::uint64_t train_seed = 0;
  std::uint64_t eval_seed = 0;
  std::map<std::string, double> metrics;  // keyed by MetricKind::label()
  std::size_t nll_underflow = 0;
  double wall_seconds = 0.0;  // kept out of the store, see timings/

  nlohmann::json to_json() const;  // without wall_seconds
  static RunResult from_json(const nlohmann::json& j);
};

/// Per-dataset seeds for the fixed test split and the training draws. Draws
/// use method "-" so every method sees the same training sets at (n, rep).
std::uint64_t test_split_seed(std::uint64_t base_seed, const std::string& dataset);
std::uint64_t training_draw_seed(std::uint64_t base_seed, const std::string& dataset, std::size_t n, std::size_t rep);

struct RunOptions {
  /// Stop handing out new cells after this many; simulates an interruption.
  std::optional<std::size_t> max_new_cells;
  std::function<void(const RunResult&)> on_result;
};

struct RunSummary {
  std::size_t total_cells = 0;
  std::size_t already_done = 0;
  std::size_t executed = 0;
  std::size_t invalid = 0;  // over the whole store
  std::size_t skipped = 0;  // over the whole store
  bool complete = false;
};

/// Runs (or resumes) the grid into cfg.output_dir:
///   manifest.json          schema version, config hash, dataset digests
///   store/<dataset>.jsonl  one record per cell, canonical order
///   timings/<dataset>.jsonl wall-clock seconds per executed cell
/// Store files are rewritten via write-then-rename after every commit and
/// always hold the completed cells sorted in grid order, so the final bytes do
/// not depend on worker count, scheduling or interruptions.
/// A manifest whose hash or dataset digests disagree throws ConfigError.
RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

struct ResultsStore {
  nlohmann::json manifest;
  std::map<std::string, std::vector<RunResult>> by_dataset;

  bool empty() const;
};

/// Reads manifest and store files. Throws ConfigError when missing or when the
/// schema version is unknown.
ResultsStore load_store(const std::filesystem::path& output_dir);

/// Digest of a loaded dataset's numeric content.
std::string dataset_digest(const data::RegressionDataset& ds);

/// Atomic replace: writes `<path>.tmp` then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace seedbench::cli
