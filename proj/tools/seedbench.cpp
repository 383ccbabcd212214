// seedbench: fetch datasets, run the grid, analyze a store, write reports.
// Exit codes: 0 success, 1 fatal config/IO error, 2 run finished with
// invalid cells.

#include "seedbench/analysis.hpp"
#include "seedbench/config.hpp"
#include "seedbench/experiment.hpp"
#include "seedbench/fetch.hpp"
#include "seedbench/report.hpp"
#include "seedbench/selftest.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace seedbench;

namespace {

int cmd_fetch(const fs::path& config_path, int attempts) {
  const auto cfg = cli::load_config(config_path);
  for (const auto& spec : cfg.datasets) {
    if (spec.source != data::DataSource::RemoteUrl) {
      std::cout << spec.name << ": " << (spec.source == data::DataSource::Synthetic ? "synthetic" : "local file")
                << ", nothing to fetch\n";
      continue;
    }
    for (int a = 1;; ++a) {
      try {
        const auto path = data::fetch_dataset(spec, cfg.cache_dir);
        std::cout << spec.name << ": " << path.string() << "\n";
        break;
      } catch (const data::FetchError& e) {
        if (!e.retriable() || a >= attempts) throw;
        std::cerr << spec.name << ": " << e.what() << " (attempt " << a << "/" << attempts << ", retrying)\n";
        std::this_thread::sleep_for(std::chrono::seconds(1 << std::min(a, 5)));
      }
    }
  }
  return 0;
}

int cmd_run(const fs::path& config_path, int workers, const std::string& output, long max_cells, bool quiet) {
  auto cfg = cli::load_config(config_path);
  if (workers > 0) cfg.workers = static_cast<unsigned>(workers);
  if (!output.empty()) cfg.output_dir = output;
  cli::RunOptions opts;
  if (max_cells >= 0) opts.max_new_cells = static_cast<std::size_t>(max_cells);
  std::size_t done = 0;
  if (!quiet)
    opts.on_result = [&](const cli::RunResult& r) {
      ++done;
      std::fprintf(stderr, "[%zu] %s %s n=%zu rep=%zu %s", done, r.dataset.c_str(), r.method.c_str(), r.n, r.rep,
                   r.skipped ? "skipped" : (r.valid ? "ok" : "INVALID"));
      for (const auto& [k, v] : r.metrics) std::fprintf(stderr, " %s=%.5g", k.c_str(), v);
      if (!r.valid && !r.reason.empty()) std::fprintf(stderr, " (%s)", r.reason.c_str());
      std::fprintf(stderr, "\n");
    };
  const auto s = cli::run_experiment(cfg, opts);
  std::cout << "cells: " << s.total_cells << " total, " << s.already_done << " resumed, " << s.executed
            << " executed, " << s.invalid << " invalid, " << s.skipped << " skipped"
            << (s.complete ? "" : " (incomplete)") << "\n"
            << "store: " << cfg.output_dir.string() << "\n";
  if (s.skipped) std::cerr << "warning: " << s.skipped << " cell(s) skipped because n exceeds the pool size\n";
  return s.invalid > 0 ? 2 : 0;
}

cli::AnalysisBundle analyze_store(const fs::path& store_dir, const std::string& metric, std::size_t reps) {
  const auto store = cli::load_store(store_dir);
  return cli::analyze(store, {metric, reps});
}

void print_fits(const cli::AnalysisBundle& b) {
  for (const auto& f : b.fits) {
    std::printf("%-12s %-14s", f.dataset.c_str(), f.method.c_str());
    if (f.fit) std::printf(" alpha=%7.3f R2=%6.3f", f.fit->alpha, f.fit->r2);
    else std::printf(" %-24s", "no fit");
    std::printf(" %s\n", f.monotone ? "M" : "NM");
  }
  for (const auto& w : b.warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_analyze(const fs::path& store_dir, const std::string& metric, std::size_t reps, fs::path out) {
  const auto b = analyze_store(store_dir, metric, reps);
  if (out.empty()) out = store_dir / "analysis" / ("bundle-" + metric + (reps ? "-r" + std::to_string(reps) : "") + ".json");
  std::error_code ec;
  if (out.has_parent_path()) fs::create_directories(out.parent_path(), ec);
  cli::write_file_atomic(out, cli::to_json(b).dump(2) + "\n");
  print_fits(b);
  std::cout << "bundle: " << out.string() << "\n";
  return 0;
}

int cmd_report(const fs::path& bundle_path, const fs::path& store_dir, const std::string& metric, std::size_t reps,
               const fs::path& out, const std::string& formats) {
  cli::AnalysisBundle b;
  if (!bundle_path.empty()) {
    std::ifstream in(bundle_path);
    if (!in) throw cli::ConfigError("cannot read bundle " + bundle_path.string());
    b = cli::bundle_from_json(nlohmann::json::parse(in));
  } else {
    b = analyze_store(store_dir, metric, reps);
  }
  const auto outcome = cli::write_report(b, out, cli::ReportFormats::parse(formats));
  for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& f : outcome.files) std::cout << f.string() << "\n";
  return 0;
}

int cmd_selftest(bool quick) {
  bool ok = true;
  for (const auto& r : cli::run_selftest(quick)) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seed-variance benchmark harness for probabilistic regression"};
  app.require_subcommand(1);

  fs::path config_path;
  int attempts = 3;
  auto* fetch = app.add_subcommand("fetch", "Download remote datasets into the cache");
  fetch->add_option("-c,--config", config_path, "Experiment config (JSON)")->required();
  fetch->add_option("--attempts", attempts, "Attempts per dataset for transient failures")->check(CLI::PositiveNumber);

  int workers = 0;
  std::string output;
  long max_cells = -1;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Execute (or resume) the experiment grid");
  run->add_option("-c,--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("-j,--workers", workers, "Worker threads (overrides the config)");
  run->add_option("-o,--output", output, "Output directory (overrides the config)");
  run->add_option("--max-cells", max_cells, "Stop after this many new cells");
  run->add_flag("-q,--quiet", quiet, "No per-cell progress");

  fs::path store_dir, bundle_out, bundle_in, report_out;
  std::string metric = "crps", formats = "all";
  std::size_t reps = 0;
  auto* analyze = app.add_subcommand("analyze", "Build the analysis bundle from a results store");
  analyze->add_option("-s,--store", store_dir, "Results directory (holds manifest.json)")->required();
  analyze->add_option("-m,--metric", metric, "Metric label, e.g. crps, nll, picp@0.9");
  analyze->add_option("-r,--reps", reps, "Use only the first R' repetitions per cell");
  analyze->add_option("-o,--out", bundle_out, "Bundle JSON path");

  auto* report = app.add_subcommand("report", "Write tables and plots");
  auto* src = report->add_option_group("source");
  src->add_option("-b,--bundle", bundle_in, "Bundle JSON from `analyze`");
  src->add_option("-s,--store", store_dir, "Results directory (analyzed on the fly)");
  src->require_option(1);
  report->add_option("-m,--metric", metric, "Metric label when analyzing a store");
  report->add_option("-r,--reps", reps, "First R' repetitions when analyzing a store");
  report->add_option("-o,--out", report_out, "Report directory")->required();
  report->add_option("-f,--formats", formats, "csv,json,markdown,svg or all");

  bool quick = false;
  auto* selftest = app.add_subcommand("selftest", "Run the built-in oracle suites");
  selftest->add_flag("--quick", quick, "Smaller sample counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fetch) return cmd_fetch(config_path, attempts);
    if (*run) return cmd_run(config_path, workers, output, max_cells, quiet);
    if (*analyze) return cmd_analyze(store_dir, metric, reps, bundle_out);
    if (*report) return cmd_report(bundle_in, store_dir, metric, reps, report_out, formats);
    if (*selftest) return cmd_selftest(quick);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
