#pragma once

#include "seedbench/analysis.hpp"

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace seedbench::cli {

inline constexpr int kReportSchemaVersion = 1;

/// A result table as written to CSV. Numbers go out with %.17g so reading
/// them back reproduces the same doubles.
struct Table {
  using Cell = std::variant<std::string, double>;
  std::string name;  // file stem, e.g. "fits"
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  /// Bitwise comparison of numeric cells (so NaN == NaN).
  bool same_as(const Table& other) const;
};

/// fits (per dataset/method alpha, C, R^2, M/NM), worst_cells (largest
/// rel-RMSE per method with its n and P(+-10%)), reliability_rows,
/// correlations (per dataset plus pooled), quartiles, fixed_effects.
std::vector<Table> report_tables(const AnalysisBundle& bundle);

std::string to_csv(const Table& t);
Table parse_csv(const std::string& name, const std::string& text);
std::string to_markdown(const Table& t);

/// Reads every <name>.csv written by write_report back into tables.
std::vector<Table> read_csv_tables(const std::filesystem::path& dir);

/// Log-log plot of every trajectory of one dataset: empirical variances as
/// markers and C n^-alpha as a line.
std::string render_trajectory_svg(const AnalysisBundle& bundle, const std::string& dataset);

struct ReportFormats {
  bool csv = true;
  bool json = true;
  bool markdown = true;
  bool svg = true;

  /// Comma-separated subset of "csv,json,markdown,svg" (or "all").
  static ReportFormats parse(const std::string& list);
};

struct ReportOutcome {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

/// Writes the selected formats into `dir` (created if needed). An empty bundle
/// yields header-only tables, no plots and a warning. Throws ConfigError when
/// the directory cannot be written.
ReportOutcome write_report(const AnalysisBundle& bundle, const std::filesystem::path& dir,
                           const ReportFormats& formats = {});

}  // namespace seedbench::cli
