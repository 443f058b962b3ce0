#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "onioncrawl/metrics.hpp"

using namespace onioncrawl;

namespace {

PageRecord rec(const std::string& url, Outcome o) {
  PageRecord r;
  r.url = url;
  r.outcome = o;
  return r;
}

RunMetrics metrics(std::int64_t identified, std::int64_t downloaded, std::int64_t failed,
                   double seconds) {
  RunMetrics m;
  m.identified = identified;
  m.downloaded = downloaded;
  m.failed = failed;
  m.relative_coverage = double(downloaded) / double(identified);
  m.failure_rate = double(failed) / double(identified);
  m.execution_time_s = seconds;
  m.pages_per_minute = downloaded / (seconds / 60.0);
  return m;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("run metrics equal a brute-force recount on random manifests") {
  std::mt19937_64 rng(99);
  const Outcome outcomes[] = {Outcome::kDownloaded, Outcome::kFailed, Outcome::kDuplicate,
                              Outcome::kSkipped};
  for (int trial = 0; trial < 50; ++trial) {
    const int universe = 1 + static_cast<int>(rng() % 40);
    std::vector<PageRecord> manifest;
    std::vector<std::string> enqueued;
    const int n_records = static_cast<int>(rng() % 60);
    for (int i = 0; i < n_records; ++i) {
      manifest.push_back(rec("http://m.onion/p/" + std::to_string(rng() % universe),
                             outcomes[rng() % 4]));
    }
    const int n_enqueued = static_cast<int>(rng() % 40);
    for (int i = 0; i < n_enqueued; ++i) {
      enqueued.push_back("http://m.onion/p/" + std::to_string(rng() % universe));
    }
    const double seconds = 0.5 + static_cast<double>(rng() % 1000) / 10.0;

    // Independent recount: sort/unique for identified, plain loops for counts.
    std::vector<std::string> all = enqueued;
    for (const auto& r : manifest) all.push_back(r.url);
    std::sort(all.begin(), all.end());
    const auto identified = std::unique(all.begin(), all.end()) - all.begin();
    std::int64_t downloaded = 0, failed = 0;
    for (const auto& r : manifest) {
      downloaded += r.outcome == Outcome::kDownloaded ? 1 : 0;
      failed += r.outcome == Outcome::kFailed ? 1 : 0;
    }

    const auto m = compute_run_metrics(manifest, enqueued, std::chrono::duration<double>(seconds));
    CHECK(m.identified == identified);
    CHECK(m.downloaded == downloaded);
    CHECK(m.failed == failed);
    if (identified > 0) {
      CHECK(m.relative_coverage == doctest::Approx(double(downloaded) / identified));
      CHECK(m.failure_rate == doctest::Approx(double(failed) / identified));
    } else {
      CHECK(m.relative_coverage == 0);
      CHECK(m.failure_rate == 0);
    }
    CHECK(m.execution_time_s == seconds);
    CHECK(m.pages_per_minute == doctest::Approx(downloaded * 60.0 / seconds));
  }
}

TEST_CASE("empty runs have zero rates") {
  const auto m = compute_run_metrics({}, {}, std::chrono::duration<double>(0));
  CHECK(m.identified == 0);
  CHECK(m.relative_coverage == 0);
  CHECK(m.pages_per_minute == 0);
}

TEST_CASE("mean and population std by hand") {
  const double rates[] = {1.0, 0.8};
  auto s = mean_std(rates);
  CHECK(s.mean == doctest::Approx(0.9));
  CHECK(s.std == doctest::Approx(0.1));

  const double same[] = {115.9, 115.9, 115.9};
  s = mean_std(same);
  CHECK(s.mean == 115.9);
  CHECK(s.std == 0.0);

  const double xs[] = {2, 4, 4, 4, 5, 5, 7, 9};
  s = mean_std(xs);
  CHECK(s.mean == 5);
  CHECK(s.std == 2);
  CHECK(mean_std({}).mean == 0);
}

TEST_CASE("ten runs with one off-by-one count have mean 115.9 and population std 0.3") {
  // Nine runs of 116 and one of 115: mean 115.9. The population std is 0.3;
  // 0.316 is the same sample with an n-1 denominator.
  std::vector<double> xs(9, 116.0);
  xs.push_back(115.0);
  const auto s = mean_std(xs);
  CHECK(s.mean == doctest::Approx(115.9));
  CHECK(s.std == doctest::Approx(0.3));
  CHECK(s.std * std::sqrt(10.0 / 9.0) == doctest::Approx(0.316).epsilon(0.001));
}

TEST_CASE("rates are averaged per run") {
  std::vector<RunRecord> runs = {{1, metrics(10, 10, 0, 60)}, {1, metrics(100, 80, 20, 60)}};
  const auto agg = aggregate_runs(runs);
  CHECK(agg.relative_coverage.mean == doctest::Approx(0.9));
  CHECK(agg.relative_coverage.std == doctest::Approx(0.1));
  CHECK(agg.identified.mean == 55);
  CHECK(agg.failure_rate.mean == doctest::Approx(0.1));
  CHECK_THROWS_AS(aggregate_runs(std::vector<RunRecord>{}), std::invalid_argument);
  std::vector<RunRecord> mixed = {{1, metrics(1, 1, 0, 1)}, {2, metrics(1, 1, 0, 1)}};
  CHECK_THROWS_AS(aggregate_runs(mixed), std::invalid_argument);
}

TEST_CASE("reports group by depth in ascending order") {
  std::vector<RunRecord> runs = {{3, metrics(4, 4, 0, 1)}, {1, metrics(2, 2, 0, 1)},
                                 {3, metrics(4, 4, 0, 1)}};
  const auto report = build_report(runs);
  REQUIRE(report.depth_levels.size() == 2);
  CHECK(report.depth_levels[0].depth == 1);
  CHECK(report.depth_levels[1].runs.size() == 2);
}

TEST_CASE("number formatting") {
  CHECK(format_number(0) == "0");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(1) == "1");
  CHECK(format_number(115.9) == "115.9");
  CHECK(format_number(0.31622) == "0.316");
  CHECK(format_number(2.0004) == "2");
  CHECK(format_number(-0.0001) == "0");
}

TEST_CASE("rendered reports") {
  std::vector<RunRecord> runs = {{1, metrics(4, 4, 0, 2)}, {1, metrics(4, 4, 0, 2)},
                                 {2, metrics(10, 8, 2, 4)}, {2, metrics(10, 10, 0, 6)}};
  const auto report = build_report(runs);

  CHECK(render_markdown(report) ==
        "## Coverage\n\n"
        "| | identified | success | rate |\n|---|---|---|---|\n"
        "| **DEPTH 1** | | | |\n| mean | 4 | 4 | 1 |\n| std | 0 | 0 | 0 |\n"
        "| **DEPTH 2** | | | |\n| mean | 10 | 9 | 0.9 |\n| std | 0 | 1 | 0.1 |\n"
        "\n## Execution time (seconds)\n\n"
        "| | DEPTH 1 | DEPTH 2 |\n|---|---|---|\n| mean | 2 | 5 |\n| std | 0 | 1 |\n"
        "\n## Pages per minute\n\n"
        "| | DEPTH 1 | DEPTH 2 |\n|---|---|---|\n| mean | 120 | 110 |\n| std | 0 | 10 |\n"
        "\n## Failure rate\n\n"
        "| | identified | failed | rate |\n|---|---|---|---|\n"
        "| **DEPTH 1** | | | |\n| mean | 4 | 0 | 0 |\n| std | 0 | 0 | 0 |\n"
        "| **DEPTH 2** | | | |\n| mean | 10 | 1 | 0.1 |\n| std | 0 | 1 | 0.1 |\n");

  const auto j = nlohmann::json::parse(render_json(report));
  REQUIRE(j["depth_levels"].size() == 2);
  const auto& d2 = j["depth_levels"][1];
  CHECK(d2["depth"] == 2);
  CHECK(d2["runs"] == 2);
  for (const char* key : {"identified", "downloaded", "failed", "relative_coverage",
                          "failure_rate", "execution_time_s", "pages_per_minute"}) {
    CHECK(d2["metrics"].contains(key));
    CHECK(d2["metrics"][key].contains("mean"));
    CHECK(d2["metrics"][key].contains("std"));
  }
  CHECK(d2["metrics"]["downloaded"]["mean"] == 9.0);

  const auto csv = render_csv(report);
  CHECK(csv.rfind("depth,run,identified,downloaded,failed,relative_coverage,failure_rate,"
                  "execution_time_s,pages_per_minute\n",
                  0) == 0);
  CHECK(csv.find("2,2,10,10,0,1,0,6,100\n") != std::string::npos);
  CHECK(csv.find("2,std,0,1,1,0.1,0.1,1,10\n") != std::string::npos);

  CHECK(parse_report_format("md") == ReportFormat::kMarkdown);
  CHECK_THROWS_AS(parse_report_format("xml"), std::invalid_argument);
  CHECK_THROWS_AS(render_markdown(AggregateReport{}), std::invalid_argument);

  testsupport::TempDir dir;
  emit_report(report, ReportFormat::kCsv, dir / "r.csv");
  CHECK(testsupport::read_file(dir / "r.csv") == csv);
}

TEST_CASE("run metrics json round-trip") {
  const auto m = metrics(10, 8, 2, 4);
  const auto back = RunMetrics::from_json(nlohmann::json::parse(m.to_json().dump()));
  CHECK(back.identified == 10);
  CHECK(back.failure_rate == doctest::Approx(0.2));
  CHECK(back.pages_per_minute == doctest::Approx(120));
}

}  // TEST_SUITE
