#include "seedbench/data.hpp"

#include "seedbench/fetch.hpp"
#include "seedbench/seeding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace seedbench::data {
namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Splits one CSV record. Handles double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(trim(field));
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::size_t resolve_column(const ColumnRef& ref, const std::vector<std::string>& header,
                           const std::filesystem::path& path) {
  if (const auto* idx = std::get_if<std::size_t>(&ref)) {
    if (*idx >= header.size())
      throw DataError(path.string() + ": column index " + std::to_string(*idx) +
                      " out of range (" + std::to_string(header.size()) + " columns)");
    return *idx;
  }
  const auto& name = std::get<std::string>(ref);
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError(path.string() + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::string to_string(const ColumnRef& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  return "#" + std::to_string(std::get<std::size_t>(c));
}

void DatasetSpec::validate() const {
  if (name.empty()) throw DataError("dataset spec: empty name");
  switch (source) {
    case DataSource::Synthetic:
      if (synthetic.features < 6)
        throw DataError(name + ": synthetic generator needs at least 6 features");
      return;
    case DataSource::RemoteUrl:
      if (!url) throw DataError(name + ": remote-url source requires a url");
      if (!checksum || checksum->size() != 64)
        throw DataError(name + ": remote-url source requires a SHA-256 checksum");
      break;
    case DataSource::LocalFile:
      if (!path) throw DataError(name + ": local-file source requires a path");
      break;
  }
  if (feature_columns.empty()) throw DataError(name + ": no feature columns selected");
  for (const auto& f : feature_columns)
    if (f == target_column)
      throw DataError(name + ": target column " + to_string(target_column) +
                      " also listed as a feature");
}

RegressionDataset RegressionDataset::subset(std::span<const std::size_t> indices) const {
  RegressionDataset out;
  out.name = name;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), d());
  out.targets.resize(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(indices[i]);
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(r);
    out.targets(static_cast<Eigen::Index>(i)) = targets(r);
  }
  return out;
}

RegressionDataset generate_synthetic(std::uint64_t seed, std::size_t count, Eigen::Index d) {
  if (d < 6) throw DataError("generate_synthetic: d must be at least 6");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  RegressionDataset ds;
  ds.name = "synthetic";
  const auto rows = static_cast<Eigen::Index>(count);
  ds.features.resize(rows, d);
  ds.targets.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) ds.features(i, j) = unif(rng);
    const auto x = ds.features.row(i);
    const double f = std::sin(3.0 * x(0)) + x(1) * x(1) + 0.5 * x(2) * x(3) + 0.3 * x(5);
    const double sigma = 0.1 + 0.4 * logistic(2.0 * x(4));
    ds.targets(i) = f + sigma * noise(rng);
  }
  return ds;
}

CsvLoad load_csv(const std::filesystem::path& path, const DatasetSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = split_csv_line(line);

  const std::size_t target_col = resolve_column(spec.target_column, header, path);
  std::vector<std::size_t> feature_cols;
  for (const auto& f : spec.feature_columns) feature_cols.push_back(resolve_column(f, header, path));

  std::vector<double> feature_buf;
  std::vector<double> target_buf;
  std::size_t dropped = 0;
  std::vector<double> row_vals(feature_cols.size());
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    bool ok = true;
    auto field_value = [&](std::size_t col) -> std::optional<double> {
      if (col >= fields.size()) return std::nullopt;
      return parse_number(fields[col]);
    };
    const auto y = field_value(target_col);
    ok = y.has_value();
    for (std::size_t j = 0; ok && j < feature_cols.size(); ++j) {
      const auto v = field_value(feature_cols[j]);
      if (!v) ok = false;
      else row_vals[j] = *v;
    }
    if (!ok) {
      ++dropped;
      continue;
    }
    feature_buf.insert(feature_buf.end(), row_vals.begin(), row_vals.end());
    target_buf.push_back(*y);
  }

  if (target_buf.empty()) throw DataError(path.string() + ": zero usable rows");
  const auto rows = static_cast<Eigen::Index>(target_buf.size());
  const auto d = static_cast<Eigen::Index>(feature_cols.size());
  if (spec.expected_rows && *spec.expected_rows != target_buf.size())
    throw DataError(path.string() + ": expected " + std::to_string(*spec.expected_rows) +
                    " rows, loaded " + std::to_string(target_buf.size()));

  CsvLoad out;
  out.dropped_rows = dropped;
  out.dataset.name = spec.name;
  out.dataset.features =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          feature_buf.data(), rows, d);
  out.dataset.targets = Eigen::Map<const Eigen::VectorXd>(target_buf.data(), rows);
  return out;
}

SplitResult split_test(const RegressionDataset& dataset, double frac, std::uint64_t seed) {
  if (!(frac >= 0.0 && frac < 1.0)) throw std::invalid_argument("split_test: frac must be in [0, 1)");
  const auto rows = static_cast<std::size_t>(dataset.rows());
  std::vector<std::size_t> perm(rows);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(frac * static_cast<double>(rows)));

  SplitResult out;
  out.test_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.pool_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(out.test_indices.begin(), out.test_indices.end());
  std::sort(out.pool_indices.begin(), out.pool_indices.end());
  return out;
}

std::vector<std::size_t> draw_training_set(std::span<const std::size_t> pool, std::size_t n,
                                           std::uint64_t seed) {
  if (n > pool.size())
    throw DataError("draw_training_set: requested n=" + std::to_string(n) +
                    " exceeds pool size " + std::to_string(pool.size()));
  std::vector<std::size_t> work(pool.begin(), pool.end());
  Rng rng(seed);
  // Partial Fisher-Yates: the first n slots become a uniform sample.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, work.size() - 1);
    std::swap(work[i], work[pick(rng)]);
  }
  work.resize(n);
  return work;
}

Standardization fit_standardization(const RegressionDataset& dataset,
                                    std::span<const std::size_t> train_indices) {
  if (train_indices.size() < 2)
    throw std::invalid_argument("fit_standardization: need at least 2 training rows");
  const RegressionDataset train = dataset.subset(train_indices);
  const double count = static_cast<double>(train.rows());

  // Constant columns get mean = the constant and std = 1, so they standardize
  // to exact zeros.
  auto moments = [count](const auto& col, double& mean, double& std) {
    if (col.maxCoeff() == col.minCoeff()) {
      mean = col(0);
      std = 1.0;
      return;
    }
    mean = col.mean();
    std = std::sqrt((col.array() - mean).square().sum() / count);
    if (!(std > 0.0)) std = 1.0;
  };

  Standardization s;
  s.feature_means.resize(train.d());
  s.feature_stds.resize(train.d());
  for (Eigen::Index j = 0; j < train.d(); ++j)
    moments(train.features.col(j), s.feature_means(j), s.feature_stds(j));
  moments(train.targets, s.target_mean, s.target_std);
  return s;
}

RegressionDataset apply_standardization(const RegressionDataset& dataset, const Standardization& s) {
  RegressionDataset out;
  out.name = dataset.name;
  out.features = (dataset.features.rowwise() - s.feature_means.transpose()).array().rowwise() /
                 s.feature_stds.transpose().array();
  out.targets = (dataset.targets.array() - s.target_mean) / s.target_std;
  return out;
}

RegressionDataset invert_standardization(const RegressionDataset& dataset, const Standardization& s) {
  RegressionDataset out;
  out.name = dataset.name;
  out.features = (dataset.features.array().rowwise() * s.feature_stds.transpose().array()).matrix();
  out.features.rowwise() += s.feature_means.transpose();
  out.targets = dataset.targets.array() * s.target_std + s.target_mean;
  return out;
}

CsvLoad load_dataset(const DatasetSpec& spec, const std::filesystem::path& cache_dir) {
  spec.validate();
  switch (spec.source) {
    case DataSource::Synthetic: {
      CsvLoad out;
      out.dataset = generate_synthetic(spec.synthetic.seed, spec.synthetic.count, spec.synthetic.features);
      out.dataset.name = spec.name;
      return out;
    }
    case DataSource::LocalFile:
      return load_csv(*spec.path, spec);
    case DataSource::RemoteUrl: {
      const auto p = cache_path(spec, cache_dir);
      if (!std::filesystem::exists(p))
        throw DataError(spec.name + ": not in cache (" + p.string() + "); run `fetch` first");
      return load_csv(p, spec);
    }
  }
  throw DataError("unreachable");
}

}  // namespace seedbench::data
