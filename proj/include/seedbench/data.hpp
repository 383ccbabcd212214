#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace seedbench::data {

/// Raised for unrecoverable dataset problems (missing columns, no usable rows,
/// row-count mismatch, malformed spec).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataSource { Synthetic, LocalFile, RemoteUrl };

/// A CSV column selected by header name or zero-based position.
using ColumnRef = std::variant<std::string, std::size_t>;

std::string to_string(const ColumnRef& c);

struct SyntheticParams {
  std::uint64_t seed = 7;
  std::size_t count = 5000;
  Eigen::Index features = 8;
};

struct DatasetSpec {
  std::string name;
  DataSource source = DataSource::Synthetic;
  std::optional<std::string> url;
  std::optional<std::string> checksum;  // lowercase SHA-256 hex
  std::optional<std::filesystem::path> path;
  ColumnRef target_column = std::string{};
  std::vector<ColumnRef> feature_columns;
  std::optional<std::size_t> expected_rows;
  SyntheticParams synthetic;

  /// Throws DataError when an invariant is violated.
  void validate() const;
};

/// Features are stored rows x d (one example per row).
struct RegressionDataset {
  std::string name;
  Eigen::MatrixXd features;
  Eigen::VectorXd targets;

  Eigen::Index rows() const { return targets.size(); }
  Eigen::Index d() const { return features.cols(); }

  /// Sub-dataset holding the given rows, in the given order.
  RegressionDataset subset(std::span<const std::size_t> indices) const;
};

struct SplitResult {
  std::vector<std::size_t> pool_indices;
  std::vector<std::size_t> test_indices;
};

struct Standardization {
  Eigen::VectorXd feature_means;
  Eigen::VectorXd feature_stds;
  double target_mean = 0.0;
  double target_std = 1.0;
};

struct CsvLoad {
  RegressionDataset dataset;
  std::size_t dropped_rows = 0;
};

/// x ~ U[-1,1]^d, y = sin(3x1) + x2^2 + 0.5 x3 x4 + 0.3 x6 + sigma(x) eps,
/// sigma(x) = 0.1 + 0.4 logistic(2 x5). Requires d >= 6.
RegressionDataset generate_synthetic(std::uint64_t seed, std::size_t count = 5000,
                                     Eigen::Index d = 8);

/// Header-row CSV; columns are selected by name or index. Rows with a missing
/// or non-numeric value in any selected column are dropped and counted.
CsvLoad load_csv(const std::filesystem::path& path, const DatasetSpec& spec);

SplitResult split_test(const RegressionDataset& dataset, double frac, std::uint64_t seed);

std::vector<std::size_t> draw_training_set(std::span<const std::size_t> pool, std::size_t n,
                                           std::uint64_t seed);

Standardization fit_standardization(const RegressionDataset& dataset,
                                    std::span<const std::size_t> train_indices);
RegressionDataset apply_standardization(const RegressionDataset& dataset,
                                        const Standardization& s);
RegressionDataset invert_standardization(const RegressionDataset& dataset,
                                         const Standardization& s);

/// Loads a dataset from its spec. Remote sources must already be in the cache
/// (see fetch.hpp); `cache_dir` is used to locate them.
CsvLoad load_dataset(const DatasetSpec& spec, const std::filesystem::path& cache_dir);

}  // namespace seedbench::data
