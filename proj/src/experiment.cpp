#include "seedbench/experiment.hpp"

#include "seedbench/fetch.hpp"
#include "seedbench/seeding.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace seedbench::cli {
namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json RunResult::to_json() const {
  json j{{"dataset", dataset}, {"method", method}, {"n", n},           {"rep", rep},
         {"valid", valid},     {"skipped", skipped}, {"reason", reason}, {"draw_seed", draw_seed},
         {"train_seed", train_seed}, {"eval_seed", eval_seed}};
  j["invalid_epoch"] = invalid_epoch ? json(*invalid_epoch) : json(nullptr);
  j["metrics"] = json::object();
  for (const auto& [k, v] : metrics) j["metrics"][k] = v;
  j["nll_underflow"] = nll_underflow;
  return j;
}

RunResult RunResult::from_json(const nlohmann::json& j) {
  RunResult r;
  r.dataset = j.at("dataset").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.n = j.at("n").get<std::size_t>();
  r.rep = j.at("rep").get<std::size_t>();
  r.valid = j.at("valid").get<bool>();
  r.skipped = j.value("skipped", false);
  r.reason = j.value("reason", "");
  if (j.contains("invalid_epoch") && !j.at("invalid_epoch").is_null()) r.invalid_epoch = j.at("invalid_epoch").get<int>();
  r.draw_seed = j.value("draw_seed", std::uint64_t{0});
  r.train_seed = j.value("train_seed", std::uint64_t{0});
  r.eval_seed = j.value("eval_seed", std::uint64_t{0});
  for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = v.get<double>();
  r.nll_underflow = j.value("nll_underflow", std::size_t{0});
  return r;
}

std::uint64_t test_split_seed(std::uint64_t base_seed, const std::string& dataset) {
  return derive_seed(base_seed, dataset, "-", 0, 0, "draw");
}

std::uint64_t training_draw_seed(std::uint64_t base_seed, const std::string& dataset, std::size_t n,
                                 std::size_t rep) {
  return derive_seed(base_seed, dataset, "-", n, rep, "draw");
}

bool ResultsStore::empty() const {
  for (const auto& [name, rows] : by_dataset)
    if (!rows.empty()) return false;
  return true;
}

std::string dataset_digest(const data::RegressionDataset& ds) {
  std::string bytes;
  const auto rows = static_cast<std::uint64_t>(ds.rows());
  const auto cols = static_cast<std::uint64_t>(ds.d());
  bytes.append(reinterpret_cast<const char*>(&rows), sizeof rows);
  bytes.append(reinterpret_cast<const char*>(&cols), sizeof cols);
  // Row-major, so the digest does not depend on Eigen's storage order.
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.d(); ++j) {
      const double v = ds.features(i, j);
      bytes.append(reinterpret_cast<const char*>(&v), sizeof v);
    }
    const double t = ds.targets(i);
    bytes.append(reinterpret_cast<const char*>(&t), sizeof t);
  }
  return data::sha256_hex(bytes);
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw ConfigError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw ConfigError("cannot rename " + tmp.string() + ": " + ec.message());
}

namespace {

struct PreparedDataset {
  const data::DatasetSpec* spec = nullptr;
  data::RegressionDataset data;
  data::SplitResult split;
  data::RegressionDataset test;
  std::string digest;
  std::size_t dropped_rows = 0;
  fs::path store_path;
  fs::path timing_path;
  std::map<std::size_t, std::string> committed;  // canonical index -> JSON line
};

struct Cell {
  std::size_t dataset = 0;
  std::size_t method = 0;
  std::size_t size = 0;
  std::size_t rep = 0;
  std::size_t index = 0;  // canonical position within the dataset's store
};

std::size_t canonical_index(const ExperimentConfig& cfg, std::size_t method, std::size_t size, std::size_t rep) {
  return (method * cfg.sizes.size() + size) * cfg.repetitions + rep;
}

RunResult run_cell(const ExperimentConfig& cfg, const PreparedDataset& ds, const Cell& cell) {
  const auto& mcfg = cfg.methods[cell.method];
  RunResult r;
  r.dataset = ds.spec->name;
  r.method = mcfg.name;
  r.n = cfg.sizes[cell.size];
  r.rep = cell.rep;
  r.draw_seed = training_draw_seed(cfg.base_seed, r.dataset, r.n, r.rep);
  r.train_seed = derive_seed(cfg.base_seed, r.dataset, r.method, r.n, r.rep, "train");
  r.eval_seed = derive_seed(cfg.base_seed, r.dataset, r.method, r.n, r.rep, "eval");

  if (r.n > ds.split.pool_indices.size()) {
    r.skipped = true;
    r.reason = "n=" + std::to_string(r.n) + " exceeds pool size " + std::to_string(ds.split.pool_indices.size());
    return r;
  }

  try {
    const auto idx = data::draw_training_set(ds.split.pool_indices, r.n, r.draw_seed);
    const auto st = data::fit_standardization(ds.data, idx);
    const auto train = data::apply_standardization(ds.data.subset(idx), st);
    const auto test = data::apply_standardization(ds.test, st);

    auto trained = methods::train(methods::TrainingSet::from(train), mcfg, r.train_seed);
    if (!trained.valid) {
      r.reason = trained.reason;
      r.invalid_epoch = trained.invalid_epoch;
      return r;
    }
    const auto preds = methods::predict(trained.model, mcfg, test.features.transpose(), r.eval_seed);
    const std::span<const double> ys(test.targets.data(), static_cast<std::size_t>(test.targets.size()));
    for (const auto& kind : cfg.metrics) {
      const auto s = scoring::mean_metric(preds, ys, kind);
      if (!std::isfinite(s.mean)) {
        r.metrics.clear();
        r.reason = "non-finite " + kind.label();
        return r;
      }
      r.metrics[kind.label()] = s.mean;
      if (kind.type == scoring::MetricType::Nll) r.nll_underflow += s.flagged;
    }
    r.valid = true;
  } catch (const std::exception& e) {
    r.metrics.clear();
    r.valid = false;
    r.reason = e.what();
  }
  return r;
}

json manifest_for(const ExperimentConfig& cfg, const std::vector<PreparedDataset>& prepared) {
  json m;
  m["schema_version"] = kStoreSchemaVersion;
  m["config_hash"] = config_hash(cfg);
  m["config"] = canonical_json(cfg);
  m["datasets"] = json::object();
  for (const auto& d : prepared)
    m["datasets"][d.spec->name] = {{"digest", d.digest},
                                   {"rows", d.data.rows()},
                                   {"pool", d.split.pool_indices.size()},
                                   {"test", d.split.test_indices.size()},
                                   {"dropped_rows", d.dropped_rows}};
  return m;
}

void check_manifest(const json& existing, const json& fresh, const fs::path& path) {
  if (existing.value("schema_version", -1) != kStoreSchemaVersion)
    throw ConfigError(path.string() + ": store schema version " + existing.value("schema_version", json(-1)).dump() +
                      " is not supported");
  if (existing.value("config_hash", "") != fresh.at("config_hash").get<std::string>())
    throw ConfigError(path.string() + ": config hash mismatch (store " + existing.value("config_hash", "?") +
                      ", config " + fresh.at("config_hash").get<std::string>() +
                      "); use a fresh output_dir for a different configuration");
  for (const auto& [name, info] : fresh.at("datasets").items()) {
    const auto have = existing.at("datasets").value(name, json::object()).value("digest", "");
    if (have != info.at("digest").get<std::string>())
      throw ConfigError(path.string() + ": dataset '" + name + "' content changed since the store was created");
  }
}

std::string join_lines(const std::map<std::size_t, std::string>& lines) {
  std::string out;
  for (const auto& [idx, line] : lines) {
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(cfg.output_dir / "store", ec);
  fs::create_directories(cfg.output_dir / "timings", ec);
  if (ec || !fs::is_directory(cfg.output_dir / "store"))
    throw ConfigError("cannot create output directory " + cfg.output_dir.string());

  std::vector<PreparedDataset> prepared(cfg.datasets.size());
  for (std::size_t i = 0; i < cfg.datasets.size(); ++i) {
    auto& p = prepared[i];
    p.spec = &cfg.datasets[i];
    try {
      auto loaded = data::load_dataset(*p.spec, cfg.cache_dir);
      p.data = std::move(loaded.dataset);
      p.dropped_rows = loaded.dropped_rows;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("loading dataset: ") + e.what());
    }
    p.split = data::split_test(p.data, cfg.test_frac, test_split_seed(cfg.base_seed, p.spec->name));
    p.test = p.data.subset(p.split.test_indices);
    p.digest = dataset_digest(p.data);
    p.store_path = cfg.output_dir / "store" / (p.spec->name + ".jsonl");
    p.timing_path = cfg.output_dir / "timings" / (p.spec->name + ".jsonl");
  }

  const fs::path manifest_path = cfg.output_dir / "manifest.json";
  const json manifest = manifest_for(cfg, prepared);
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    json existing;
    try {
      existing = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(manifest_path.string() + ": " + e.what());
    }
    check_manifest(existing, manifest, manifest_path);
  } else {
    write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  }

  // Reload completed cells.
  std::vector<Cell> todo;
  RunSummary summary;
  for (std::size_t di = 0; di < prepared.size(); ++di) {
    auto& p = prepared[di];
    std::map<std::tuple<std::string, std::size_t, std::size_t>, std::size_t> slot;
    for (std::size_t m = 0; m < cfg.methods.size(); ++m)
      for (std::size_t s = 0; s < cfg.sizes.size(); ++s)
        for (std::size_t r = 0; r < cfg.repetitions; ++r)
          slot[{cfg.methods[m].name, cfg.sizes[s], r}] = canonical_index(cfg, m, s, r);
    if (fs::exists(p.store_path)) {
      std::ifstream in(p.store_path);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        RunResult r;
        try {
          r = RunResult::from_json(json::parse(line));
        } catch (const json::exception& e) {
          throw ConfigError(p.store_path.string() + ": corrupt record: " + e.what());
        }
        auto it = slot.find({r.method, r.n, r.rep});
        if (it == slot.end() || r.dataset != p.spec->name)
          throw ConfigError(p.store_path.string() + ": record outside the configured grid");
        p.committed[it->second] = line;
      }
    }
    for (std::size_t m = 0; m < cfg.methods.size(); ++m)
      for (std::size_t s = 0; s < cfg.sizes.size(); ++s)
        for (std::size_t r = 0; r < cfg.repetitions; ++r) {
          const auto idx = canonical_index(cfg, m, s, r);
          ++summary.total_cells;
          if (p.committed.count(idx)) {
            ++summary.already_done;
            continue;
          }
          todo.push_back({di, m, s, r, idx});
        }
  }

  std::size_t budget = todo.size();
  if (options.max_new_cells) budget = std::min(budget, *options.max_new_cells);

  std::atomic<std::size_t> next{0};
  std::mutex commit_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= budget) return;
      const Cell& cell = todo[k];
      auto& p = prepared[cell.dataset];
      const auto t0 = std::chrono::steady_clock::now();
      RunResult r = run_cell(cfg, p, cell);
      r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      std::lock_guard<std::mutex> lock(commit_mutex);
      if (failure) return;
      try {
        p.committed[cell.index] = r.to_json().dump();
        write_file_atomic(p.store_path, join_lines(p.committed));
        std::ofstream timing(p.timing_path, std::ios::app);
        timing << json{{"method", r.method}, {"n", r.n}, {"rep", r.rep}, {"wall_seconds", r.wall_seconds}}.dump()
               << '\n';
        ++summary.executed;
        if (options.on_result) options.on_result(r);
      } catch (...) {
        failure = std::current_exception();
        next.store(budget);
      }
    }
  };

  const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, cfg.workers), budget));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Tally over the whole store so resumed runs report the same totals.
  std::size_t committed_total = 0;
  for (const auto& p : prepared) {
    committed_total += p.committed.size();
    for (const auto& [idx, line] : p.committed) {
      const auto j = json::parse(line);
      if (j.value("skipped", false)) ++summary.skipped;
      else if (!j.value("valid", false)) ++summary.invalid;
    }
  }
  summary.complete = committed_total == summary.total_cells;
  return summary;
}

ResultsStore load_store(const fs::path& output_dir) {
  ResultsStore store;
  const fs::path manifest_path = output_dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("no results store at " + output_dir.string() + " (missing manifest.json)");
  try {
    store.manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(manifest_path.string() + ": " + e.what());
  }
  if (store.manifest.value("schema_version", -1) != kStoreSchemaVersion)
    throw ConfigError(manifest_path.string() + ": unsupported store schema version");
  for (const auto& [name, info] : store.manifest.at("datasets").items()) {
    auto& rows = store.by_dataset[name];
    std::ifstream f(output_dir / "store" / (name + ".jsonl"));
    std::string line;
    while (f && std::getline(f, line)) {
      if (line.empty()) continue;
      try {
        rows.push_back(RunResult::from_json(json::parse(line)));
      } catch (const json::exception& e) {
        throw ConfigError(name + ".jsonl: corrupt record: " + e.what());
      }
    }
  }
  return store;
}

}  // namespace seedbench::cli
