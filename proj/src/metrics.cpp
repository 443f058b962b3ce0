#include "onioncrawl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "onioncrawl/errors.hpp"

namespace onioncrawl {
namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

struct Field {
  const char* name;
  double (*get)(const RunMetrics&);
  Stat DepthAggregate::*stat;
};

const Field kFields[] = {
    {"identified", [](const RunMetrics& m) { return double(m.identified); },
     &DepthAggregate::identified},
    {"downloaded", [](const RunMetrics& m) { return double(m.downloaded); },
     &DepthAggregate::downloaded},
    {"failed", [](const RunMetrics& m) { return double(m.failed); },
     &DepthAggregate::failed},
    {"relative_coverage", [](const RunMetrics& m) { return m.relative_coverage; },
     &DepthAggregate::relative_coverage},
    {"failure_rate", [](const RunMetrics& m) { return m.failure_rate; },
     &DepthAggregate::failure_rate},
    {"execution_time_s", [](const RunMetrics& m) { return m.execution_time_s; },
     &DepthAggregate::execution_time_s},
    {"pages_per_minute", [](const RunMetrics& m) { return m.pages_per_minute; },
     &DepthAggregate::pages_per_minute},
};

}  // namespace

nlohmann::ordered_json RunMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["identified"] = identified;
  j["downloaded"] = downloaded;
  j["failed"] = failed;
  j["relative_coverage"] = relative_coverage;
  j["failure_rate"] = failure_rate;
  j["execution_time_s"] = execution_time_s;
  j["pages_per_minute"] = pages_per_minute;
  return j;
}

RunMetrics RunMetrics::from_json(const nlohmann::json& j) {
  RunMetrics m;
  m.identified = j.at("identified").get<std::int64_t>();
  m.downloaded = j.at("downloaded").get<std::int64_t>();
  m.failed = j.at("failed").get<std::int64_t>();
  m.relative_coverage = j.at("relative_coverage").get<double>();
  m.failure_rate = j.at("failure_rate").get<double>();
  m.execution_time_s = j.at("execution_time_s").get<double>();
  m.pages_per_minute = j.at("pages_per_minute").get<double>();
  return m;
}

RunMetrics compute_run_metrics(std::span<const PageRecord> manifest,
                               std::span<const std::string> enqueued,
                               std::chrono::duration<double> wall_clock) {
  std::set<std::string> urls(enqueued.begin(), enqueued.end());
  RunMetrics m;
  for (const auto& r : manifest) {
    urls.insert(r.url);
    if (r.outcome == Outcome::kDownloaded) ++m.downloaded;
    if (r.outcome == Outcome::kFailed) ++m.failed;
  }
  m.identified = static_cast<std::int64_t>(urls.size());
  m.relative_coverage = ratio(m.downloaded, m.identified);
  m.failure_rate = ratio(m.failed, m.identified);
  m.execution_time_s = wall_clock.count();
  const double minutes = wall_clock.count() / 60.0;
  m.pages_per_minute = minutes > 0 ? static_cast<double>(m.downloaded) / minutes : 0.0;
  return m;
}

Stat mean_std(std::span<const double> xs) {
  if (xs.empty()) return {};
  if (std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs.front(); })) {
    return {xs.front(), 0.0};
  }
  double sum = 0;
  for (double x : xs) sum += x;
  const double n = static_cast<double>(xs.size());
  const double mean = sum / n;
  double sq = 0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / n)};
}

DepthAggregate aggregate_runs(std::span<const RunRecord> runs) {
  if (runs.empty()) throw std::invalid_argument("no runs");
  DepthAggregate agg;
  agg.depth = runs.front().depth;
  for (const auto& r : runs) {
    if (r.depth != agg.depth) {
      throw std::invalid_argument("cannot aggregate runs of different depth levels (" +
                                  std::to_string(agg.depth) + " and " +
                                  std::to_string(r.depth) + ")");
    }
    agg.runs.push_back(r.metrics);
  }
  std::vector<double> xs(agg.runs.size());
  for (const auto& f : kFields) {
    std::transform(agg.runs.begin(), agg.runs.end(), xs.begin(), f.get);
    agg.*f.stat = mean_std(xs);
  }
  return agg;
}

AggregateReport build_report(std::span<const RunRecord> runs) {
  std::map<int, std::vector<RunRecord>> by_depth;
  for (const auto& r : runs) by_depth[r.depth].push_back(r);
  AggregateReport report;
  for (const auto& [depth, group] : by_depth) {
    report.depth_levels.push_back(aggregate_runs(group));
  }
  return report;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::kJson;
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "markdown" || s == "md") return ReportFormat::kMarkdown;
  throw std::invalid_argument("unknown report format: " + std::string(s));
}

std::string format_number(double v) {
  if (v == 0) return "0";  // also folds -0
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

std::string render_json(const AggregateReport& report) {
  nlohmann::ordered_json levels = nlohmann::ordered_json::array();
  for (const auto& level : report.depth_levels) {
    nlohmann::ordered_json metrics;
    for (const auto& f : kFields) {
      const Stat& s = level.*f.stat;
      metrics[f.name] = {{"mean", s.mean}, {"std", s.std}};
    }
    nlohmann::ordered_json entry;
    entry["depth"] = level.depth;
    entry["runs"] = level.runs.size();
    entry["metrics"] = std::move(metrics);
    levels.push_back(std::move(entry));
  }
  nlohmann::ordered_json doc;
  doc["depth_levels"] = std::move(levels);
  return doc.dump(2) + "\n";
}

std::string render_csv(const AggregateReport& report) {
  if (report.depth_levels.empty()) throw std::invalid_argument("no runs");
  std::ostringstream out;
  out << "depth,run";
  for (const auto& f : kFields) out << ',' << f.name;
  out << '\n';
  for (const auto& level : report.depth_levels) {
    for (std::size_t i = 0; i < level.runs.size(); ++i) {
      out << level.depth << ',' << i + 1;
      for (const auto& f : kFields) out << ',' << format_number(f.get(level.runs[i]));
      out << '\n';
    }
    for (const char* which : {"mean", "std"}) {
      out << level.depth << ',' << which;
      for (const auto& f : kFields) {
        const Stat& s = level.*f.stat;
        out << ',' << format_number(which[0] == 'm' ? s.mean : s.std);
      }
      out << '\n';
    }
  }
  return out.str();
}

namespace {

void counts_table(std::ostringstream& out, const AggregateReport& report,
                  const char* middle, Stat DepthAggregate::*middle_stat,
                  Stat DepthAggregate::*rate_stat) {
  out << "| | identified | " << middle << " | rate |\n|---|---|---|---|\n";
  for (const auto& level : report.depth_levels) {
    out << "| **DEPTH " << level.depth << "** | | | |\n";
    out << "| mean | " << format_number(level.identified.mean) << " | "
        << format_number((level.*middle_stat).mean) << " | "
        << format_number((level.*rate_stat).mean) << " |\n";
    out << "| std | " << format_number(level.identified.std) << " | "
        << format_number((level.*middle_stat).std) << " | "
        << format_number((level.*rate_stat).std) << " |\n";
  }
}

void by_depth_table(std::ostringstream& out, const AggregateReport& report,
                    Stat DepthAggregate::*stat) {
  out << "| |";
  for (const auto& level : report.depth_levels) out << " DEPTH " << level.depth << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < report.depth_levels.size(); ++i) out << "---|";
  out << "\n| mean |";
  for (const auto& level : report.depth_levels) {
    out << ' ' << format_number((level.*stat).mean) << " |";
  }
  out << "\n| std |";
  for (const auto& level : report.depth_levels) {
    out << ' ' << format_number((level.*stat).std) << " |";
  }
  out << '\n';
}

}  // namespace

std::string render_markdown(const AggregateReport& report) {
  if (report.depth_levels.empty()) throw std::invalid_argument("no runs");
  std::ostringstream out;
  out << "## Coverage\n\n";
  counts_table(out, report, "success", &DepthAggregate::downloaded,
               &DepthAggregate::relative_coverage);
  out << "\n## Execution time (seconds)\n\n";
  by_depth_table(out, report, &DepthAggregate::execution_time_s);
  out << "\n## Pages per minute\n\n";
  by_depth_table(out, report, &DepthAggregate::pages_per_minute);
  out << "\n## Failure rate\n\n";
  counts_table(out, report, "failed", &DepthAggregate::failed,
               &DepthAggregate::failure_rate);
  return out.str();
}

std::string render_report(const AggregateReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::kJson: return render_json(report);
    case ReportFormat::kCsv: return render_csv(report);
    case ReportFormat::kMarkdown: return render_markdown(report);
  }
  throw std::invalid_argument("unknown report format");
}

void emit_report(const AggregateReport& report, ReportFormat format,
                 const std::filesystem::path& file) {
  const std::string text = render_report(report, format);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw StorageError("cannot write report " + file.string());
}

}  // namespace onioncrawl
