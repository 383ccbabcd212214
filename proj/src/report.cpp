#include "seedbench/report.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace seedbench::cli {
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double sv() { return static_cast<double>(kReportSchemaVersion); }
double dz(std::size_t v) { return static_cast<double>(v); }

// Splits one CSV record. Quoted fields come back with quoted=true.
std::vector<std::pair<std::string, bool>> split_record(const std::string& line) {
  std::vector<std::pair<std::string, bool>> out;
  std::size_t i = 0;
  while (true) {
    std::string field;
    bool quoted = false;
    if (i < line.size() && line[i] == '"') {
      quoted = true;
      ++i;
      while (i < line.size()) {
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            field += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        field += line[i++];
      }
    }
    while (i < line.size() && line[i] != ',') field += line[i++];
    out.emplace_back(field, quoted);
    if (i >= line.size()) break;
    ++i;
  }
  return out;
}

void write_checked(const fs::path& path, const std::string& bytes, ReportOutcome& out) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << bytes;
  f.flush();
  if (!f) throw ConfigError("short write to " + path.string());
  out.files.push_back(path);
}

}  // namespace

bool Table::same_as(const Table& other) const {
  if (name != other.name || columns != other.columns || rows.size() != other.rows.size()) return false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != other.rows[r].size()) return false;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const auto& a = rows[r][c];
      const auto& b = other.rows[r][c];
      if (a.index() != b.index()) return false;
      if (const auto* s = std::get_if<std::string>(&a)) {
        if (*s != std::get<std::string>(b)) return false;
      } else if (std::bit_cast<std::uint64_t>(std::get<double>(a)) != std::bit_cast<std::uint64_t>(std::get<double>(b))) {
        return false;
      }
    }
  }
  return true;
}

std::vector<Table> report_tables(const AnalysisBundle& b) {
  std::vector<Table> out;
  const double first_reps = dz(b.first_reps);

  Table fits{"fits", "Power-law fits of variance trajectories",
             {"schema_version", "metric", "first_reps", "dataset", "method", "alpha", "C", "r2", "label", "points_used",
              "zero_variance_excluded"},
             {}};
  for (const auto& f : b.fits) {
    const bool has = f.fit.has_value();
    fits.rows.push_back({sv(), b.metric, first_reps, f.dataset, f.method, has ? f.fit->alpha : kNaN,
                         has ? f.fit->C : kNaN, has ? f.fit->r2 : kNaN, std::string(f.monotone ? "M" : "NM"),
                         has ? dz(f.fit->points_used) : 0.0, has ? dz(f.fit->zero_variance_excluded) : 0.0});
  }
  out.push_back(std::move(fits));

  Table worst{"worst_cells", "Single-seed error at the worst training size",
              {"schema_version", "dataset", "method", "peak_n", "max_rel_rmse", "p_within_10", "local_variance"},
              {}};
  for (const auto& f : b.fits) {
    const reliability::ReliabilityRow* best = nullptr;
    for (const auto& r : b.rows)
      if (r.dataset == f.dataset && r.method == f.method && (!best || r.rel_rmse > best->rel_rmse)) best = &r;
    if (best)
      worst.rows.push_back({sv(), best->dataset, best->method, dz(best->n), best->rel_rmse, best->p_within_10,
                            best->local_variance});
  }
  out.push_back(std::move(worst));

  Table rows{"reliability_rows", "Per-cell reliability",
             {"schema_version", "dataset", "method", "n", "local_variance", "rel_rmse", "p_within_10", "mean_metric",
              "valid_count"},
             {}};
  for (const auto& r : b.rows)
    rows.rows.push_back({sv(), r.dataset, r.method, dz(r.n), r.local_variance, r.rel_rmse, r.p_within_10,
                         r.mean_metric, dz(r.valid_count)});
  out.push_back(std::move(rows));

  Table corr{"correlations", "Spearman correlation of local variance and rel-RMSE",
             {"schema_version", "scope", "rho", "p_value", "pair_count"},
             {}};
  for (const auto& [k, c] : b.correlations) {
    if (k == "pooled") continue;
    corr.rows.push_back({sv(), k, c.rho, c.p_value, dz(c.pair_count)});
  }
  if (auto it = b.correlations.find("pooled"); it != b.correlations.end())
    corr.rows.push_back({sv(), std::string("pooled"), it->second.rho, it->second.p_value, dz(it->second.pair_count)});
  out.push_back(std::move(corr));

  Table quart{"quartiles", "rel-RMSE by local-variance quartile",
              {"schema_version", "dataset", "q1", "q2", "q3", "q4", "high_var_mean", "rest_mean", "ratio", "mw_p",
               "monotone"},
              {}};
  for (const auto& [k, q] : b.quartiles)
    quart.rows.push_back({sv(), k, q.q_means[0], q.q_means[1], q.q_means[2], q.q_means[3], q.high_var_mean,
                          q.rest_mean, q.ratio, q.mw_p, std::string(q.monotone_across_quartiles ? "yes" : "no")});
  out.push_back(std::move(quart));

  Table fe{"fixed_effects", "Fixed-effects fit of log rel-RMSE on log local variance",
           {"schema_version", "term", "coefficient", "standard_error", "ci_low", "ci_high"},
           {}};
  if (b.fixed_effects) {
    const auto& f = *b.fixed_effects;
    fe.rows.push_back({sv(), std::string("log_local_variance"), f.slope, f.standard_error, f.ci_low, f.ci_high});
    fe.rows.push_back({sv(), std::string("intercept"), f.intercept, kNaN, kNaN, kNaN});
    for (std::size_t i = 0; i < f.dummy_names.size(); ++i)
      fe.rows.push_back({sv(), f.dummy_names[i], f.dummy_coefficients[i], kNaN, kNaN, kNaN});
  }
  out.push_back(std::move(fe));
  return out;
}

std::string to_csv(const Table& t) {
  std::string s;
  for (std::size_t c = 0; c < t.columns.size(); ++c) s += (c ? "," : "") + t.columns[c];
  s += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) s += ',';
      if (const auto* str = std::get_if<std::string>(&row[c])) s += quote(*str);
      else s += fmt_exact(std::get<double>(row[c]));
    }
    s += '\n';
  }
  return s;
}

Table parse_csv(const std::string& name, const std::string& text) {
  Table t;
  t.name = name;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(name + ".csv: empty file");
  for (auto& [f, q] : split_record(line)) t.columns.push_back(f);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<Table::Cell> row;
    for (auto& [f, quoted] : split_record(line)) {
      if (quoted) {
        row.emplace_back(f);
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || *end != '\0') throw ConfigError(name + ".csv: bad numeric field '" + f + "'");
      row.emplace_back(v);
    }
    if (row.size() != t.columns.size()) throw ConfigError(name + ".csv: ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string to_markdown(const Table& t) {
  std::string s = "### " + t.title + "\n\n|";
  // The schema column is for machines only.
  const std::size_t first = !t.columns.empty() && t.columns[0] == "schema_version" ? 1 : 0;
  for (std::size_t c = first; c < t.columns.size(); ++c) s += " " + t.columns[c] + " |";
  s += "\n|";
  for (std::size_t c = first; c < t.columns.size(); ++c) s += " --- |";
  s += '\n';
  for (const auto& row : t.rows) {
    s += '|';
    for (std::size_t c = first; c < row.size(); ++c) {
      if (const auto* str = std::get_if<std::string>(&row[c])) s += " " + *str + " |";
      else s += " " + fmt_short(std::get<double>(row[c])) + " |";
    }
    s += '\n';
  }
  return s + '\n';
}

std::vector<Table> read_csv_tables(const fs::path& dir) {
  std::vector<Table> out;
  for (const char* name : {"fits", "worst_cells", "reliability_rows", "correlations", "quartiles", "fixed_effects"}) {
    std::ifstream in(dir / (std::string(name) + ".csv"), std::ios::binary);
    if (!in) throw ConfigError("missing " + (dir / (std::string(name) + ".csv")).string());
    std::stringstream ss;
    ss << in.rdbuf();
    out.push_back(parse_csv(name, ss.str()));
  }
  return out;
}

std::string render_trajectory_svg(const AnalysisBundle& b, const std::string& dataset) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};
  constexpr double W = 640, H = 420, L = 70, R = 160, T = 30, B = 50;

  std::vector<const TrajectoryFit*> fits;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& f : b.fits) {
    if (f.dataset != dataset) continue;
    fits.push_back(&f);
    for (std::size_t i = 0; i < f.ns.size(); ++i) {
      xmin = std::min(xmin, f.ns[i]);
      xmax = std::max(xmax, f.ns[i]);
      if (f.variances[i] > 0.0) {
        ymin = std::min(ymin, f.variances[i]);
        ymax = std::max(ymax, f.variances[i]);
      }
    }
  }
  if (!(xmax > xmin)) {
    xmin = 1;
    xmax = 10;
  }
  if (!(ymax > 0.0)) {
    ymin = 0.1;
    ymax = 1.0;
  }
  // Snap to whole decades.
  const double lx0 = std::floor(std::log10(xmin)), lx1 = std::ceil(std::log10(xmax));
  double ly0 = std::floor(std::log10(ymin)), ly1 = std::ceil(std::log10(ymax));
  if (ly1 <= ly0) ly1 = ly0 + 1;
  const double lx1f = lx1 <= lx0 ? lx0 + 1 : lx1;

  auto px = [&](double n) { return L + (std::log10(n) - lx0) / (lx1f - lx0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (std::log10(v) - ly0) / (ly1 - ly0) * (H - T - B); };

  std::ostringstream s;
  s.precision(6);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" data-x-scale=\"log\" data-y-scale=\"log\" data-x-decades=\"" << lx0 << ' ' << lx1f
    << "\" data-y-decades=\"" << ly0 << ' ' << ly1 << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << L << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(dataset)
    << ": Var[" << xml_escape(b.metric) << "] vs n</text>\n";
  s << "<g id=\"axes\" stroke=\"#333\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\"/>\n";
  for (double e = lx0; e <= lx1f; e += 1) {
    const double x = px(std::pow(10.0, e));
    s << "<line x1=\"" << x << "\" y1=\"" << H - B << "\" x2=\"" << x << "\" y2=\"" << H - B + 5 << "\"/>"
      << "<text x=\"" << x << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" stroke=\"none\">1e" << e
      << "</text>\n";
  }
  for (double e = ly0; e <= ly1; e += 1) {
    const double y = py(std::pow(10.0, e));
    s << "<line x1=\"" << L - 5 << "\" y1=\"" << y << "\" x2=\"" << L << "\" y2=\"" << y << "\"/>"
      << "<text x=\"" << L - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\" stroke=\"none\">1e" << e
      << "</text>\n";
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
    << "\" text-anchor=\"middle\" stroke=\"none\">training size n (log)</text>\n";
  s << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 16 " << (T + H - B) / 2
    << ")\" text-anchor=\"middle\" stroke=\"none\">variance (log)</text>\n";
  s << "</g>\n";

  for (std::size_t k = 0; k < fits.size(); ++k) {
    const auto& f = *fits[k];
    const char* color = kColors[k % std::size(kColors)];
    s << "<g class=\"trajectory\" data-method=\"" << xml_escape(f.method) << "\">\n";
    if (f.fit && f.fit->C > 0.0 && !f.ns.empty()) {
      s << "<polyline class=\"fit\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      const double a = std::log10(f.ns.front()), z = std::log10(f.ns.back());
      for (int i = 0; i <= 48; ++i) {
        const double n = std::pow(10.0, a + (z - a) * i / 48.0);
        s << px(n) << ',' << py(f.fit->C * std::pow(n, -f.fit->alpha)) << ' ';
      }
      s << "\"/>\n";
    }
    for (std::size_t i = 0; i < f.ns.size(); ++i) {
      if (!(f.variances[i] > 0.0)) continue;
      s << "<circle class=\"point\" cx=\"" << px(f.ns[i]) << "\" cy=\"" << py(f.variances[i])
        << "\" r=\"3.5\" fill=\"" << color << "\" data-n=\"" << f.ns[i] << "\" data-v=\"" << f.variances[i]
        << "\"/>\n";
    }
    const double ly = T + 14.0 * static_cast<double>(k) + 10;
    s << "<text x=\"" << W - R + 12 << "\" y=\"" << ly << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\""
      << color << "\">" << xml_escape(f.method);
    if (f.fit) s << " a=" << fmt_short(f.fit->alpha) << " R2=" << fmt_short(f.fit->r2);
    s << (f.monotone ? " M" : " NM") << "</text>\n";
    s << "</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

ReportFormats ReportFormats::parse(const std::string& list) {
  if (list == "all" || list.empty()) return {};
  ReportFormats f{false, false, false, false};
  std::istringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "csv") f.csv = true;
    else if (item == "json") f.json = true;
    else if (item == "markdown" || item == "md") f.markdown = true;
    else if (item == "svg") f.svg = true;
    else throw ConfigError("unknown report format '" + item + "'");
  }
  return f;
}

ReportOutcome write_report(const AnalysisBundle& bundle, const fs::path& dir, const ReportFormats& formats) {
  ReportOutcome out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw ConfigError("cannot create report directory " + dir.string());

  if (bundle.empty()) out.warnings.push_back("bundle is empty: tables carry headers only and no plots are drawn");

  const auto tables = report_tables(bundle);
  if (formats.csv)
    for (const auto& t : tables) write_checked(dir / (t.name + ".csv"), to_csv(t), out);
  if (formats.json) write_checked(dir / "bundle.json", to_json(bundle).dump(2) + "\n", out);
  if (formats.markdown) {
    std::string md = "# Variance trajectory report\n\nmetric: " + bundle.metric;
    if (bundle.first_reps) md += ", first " + std::to_string(bundle.first_reps) + " reps";
    md += "\n\n";
    for (const auto& t : tables) md += to_markdown(t);
    if (!bundle.warnings.empty()) {
      md += "### Warnings\n\n";
      for (const auto& w : bundle.warnings) md += "- " + w + "\n";
    }
    write_checked(dir / "report.md", md, out);
  }
  if (formats.svg && !bundle.empty()) {
    fs::create_directories(dir / "plots", ec);
    std::vector<std::string> datasets;
    for (const auto& f : bundle.fits)
      if (std::find(datasets.begin(), datasets.end(), f.dataset) == datasets.end()) datasets.push_back(f.dataset);
    for (const auto& d : datasets) write_checked(dir / "plots" / (d + ".svg"), render_trajectory_svg(bundle, d), out);
  }
  return out;
}

}  // namespace seedbench::cli
