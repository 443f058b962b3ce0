#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "onioncrawl/extractor.hpp"

namespace onioncrawl {

struct RunMetrics {
  std::int64_t identified = 0;
  std::int64_t downloaded = 0;
  std::int64_t failed = 0;
  double relative_coverage = 0;  // downloaded / identified
  double failure_rate = 0;       // failed / identified
  double execution_time_s = 0;
  double pages_per_minute = 0;   // downloaded / wall-clock minutes

  nlohmann::ordered_json to_json() const;
  static RunMetrics from_json(const nlohmann::json& j);
};

// identified counts the distinct URLs in the manifest together with every
// URL the crawl enqueued.
RunMetrics compute_run_metrics(std::span<const PageRecord> manifest,
                               std::span<const std::string> enqueued,
                               std::chrono::duration<double> wall_clock);

struct RunRecord {
  int depth = 0;
  RunMetrics metrics;
};

struct Stat {
  double mean = 0;
  double std = 0;  // population
};

// Mean and population std of a sample; std is exactly 0 (and the mean the
// value itself) when all samples are equal.
Stat mean_std(std::span<const double> xs);

struct DepthAggregate {
  int depth = 0;
  std::vector<RunMetrics> runs;
  Stat identified, downloaded, failed, relative_coverage, failure_rate,
      execution_time_s, pages_per_minute;
};

// All runs must share one depth label. Rates are averaged per run.
DepthAggregate aggregate_runs(std::span<const RunRecord> runs);

struct AggregateReport {
  std::vector<DepthAggregate> depth_levels;  // ascending depth
};

// Groups runs by depth label.
AggregateReport build_report(std::span<const RunRecord> runs);

enum class ReportFormat { kJson, kCsv, kMarkdown };
ReportFormat parse_report_format(std::string_view s);

std::string render_json(const AggregateReport& report);
std::string render_csv(const AggregateReport& report);
std::string render_markdown(const AggregateReport& report);
std::string render_report(const AggregateReport& report, ReportFormat format);

void emit_report(const AggregateReport& report, ReportFormat format,
                 const std::filesystem::path& file);

// Fixed-point with 3 decimals, trailing zeros trimmed ("1", "115.9").
std::string format_number(double v);

}  // namespace onioncrawl
