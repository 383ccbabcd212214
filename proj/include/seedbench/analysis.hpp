#pragma once

#include "seedbench/experiment.hpp"
#include "seedbench/reliability.hpp"
#include "seedbench/trajectory.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace seedbench::cli {

inline constexpr int kBundleSchemaVersion = 1;

struct AnalysisOptions {
  std::string metric = "crps";
  std::size_t first_reps = 0;  // R' subsample; 0 uses every rep
};

/// Variance trajectory plus fit for one (dataset, method).
struct TrajectoryFit {
  std::string dataset;
  std::string method;
  std::vector<double> ns;         // sizes with >= 2 valid values
  std::vector<double> variances;  // unbiased, same order as ns
  std::vector<std::size_t> flagged_n;
  std::optional<trajectory::PowerLawFit> fit;
  bool monotone = false;  // argmax rule over the included points
  /// Every included variance is exactly zero: reported as the flat law
  /// alpha = 0, C = 0, r2 = 1 rather than left unfitted.
  bool all_zero_variance = false;
  std::string note;  // why fit is missing, if it is
};

struct AnalysisBundle {
  int schema_version = kBundleSchemaVersion;
  std::string metric;
  std::size_t first_reps = 0;
  std::vector<trajectory::TrajectoryRecord> trajectories;
  std::vector<TrajectoryFit> fits;
  std::vector<reliability::ReliabilityRow> rows;
  std::map<std::string, reliability::CorrelationReport> correlations;  // per dataset plus "pooled"
  std::map<std::string, reliability::QuartileReport> quartiles;        // per dataset
  std::optional<reliability::FixedEffectsFit> fixed_effects;
  std::vector<std::string> warnings;

  bool empty() const { return trajectories.empty(); }
};

/// Builds every table from a store. Values of the chosen metric are taken
/// from valid, non-skipped records; with first_reps = R' only records with
/// rep < R' are used. Cells with fewer than 2 values are flagged and left
/// out of fits and rows. Analyses that are undefined on the available rows
/// are omitted with a warning.
AnalysisBundle analyze(const ResultsStore& store, const AnalysisOptions& options = {});

nlohmann::json to_json(const AnalysisBundle& bundle);
AnalysisBundle bundle_from_json(const nlohmann::json& j);

}  // namespace seedbench::cli
