#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mockmarket/mockmarket.hpp"
#include "onioncrawl/config.hpp"
#include "onioncrawl/engine.hpp"
#include "onioncrawl/errors.hpp"
#include "onioncrawl/metrics.hpp"

using namespace onioncrawl;

namespace {

// Flags shared by crawl and bench. Unset flags leave the config file value.
struct Overrides {
  std::string config_file;
  std::optional<int> max_depth;
  std::optional<std::size_t> max_links;
  std::optional<double> time_limit_s;
  std::string targets_file;
  std::string proxy;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::optional<int> workers;
  std::string captcha_policy;
  std::optional<double> captcha_timeout_s;
  std::optional<int> api_port;
  std::optional<int> retries;
  std::optional<int> politeness_delay_ms;
  std::optional<int> request_timeout_ms;
  std::optional<int> rotation_period;
};

void add_crawl_flags(CLI::App& app, Overrides& o, bool with_stop_flags) {
  app.add_option("--config", o.config_file, "crawl config JSON");
  if (with_stop_flags) {
    app.add_option("--max-depth", o.max_depth, "maximum link depth (starting link is 0)");
  }
  app.add_option("--max-links", o.max_links, "stop after this many downloaded pages");
  app.add_option("--time-limit", o.time_limit_s, "wall-clock limit in seconds");
  app.add_option("--targets-file", o.targets_file, "stop once these URLs are collected");
  app.add_option("--proxy", o.proxy, "socks5h://host:port, socks5://host:port or http://host:port");
  app.add_option("--seed", o.seed, "RNG seed");
  app.add_option("--output-dir", o.output_dir, "where pages, manifest and summary go");
  app.add_option("--workers", o.workers, "concurrent fetches");
  app.add_option("--captcha-policy", o.captcha_policy,
                 "interactive, abandon, fail or script:<file>");
  app.add_option("--captcha-timeout", o.captcha_timeout_s, "seconds to wait for a captcha answer");
  app.add_option("--api-port", o.api_port, "serve the control API on 127.0.0.1 (0 picks a port)");
  app.add_option("--retries", o.retries, "retries on 503 and transport errors");
  app.add_option("--politeness-delay", o.politeness_delay_ms, "milliseconds between requests");
  app.add_option("--request-timeout", o.request_timeout_ms, "per-request timeout in milliseconds");
  app.add_option("--rotation-period", o.rotation_period, "successful requests per cookie");
}

Millis seconds(double s) { return Millis(static_cast<std::int64_t>(s * 1000.0)); }

CrawlConfig build_config(const Overrides& o) {
  CrawlConfig cfg = o.config_file.empty() ? CrawlConfig{} : load_crawl_config(o.config_file);
  if (o.max_depth) cfg.max_depth = *o.max_depth;
  if (o.max_links) cfg.max_links = *o.max_links;
  if (o.time_limit_s) {
    if (*o.time_limit_s < 0) throw ConfigError("time limit must be non-negative");
    cfg.time_limit = seconds(*o.time_limit_s);
  }
  if (!o.targets_file.empty()) cfg.target_links = load_targets_file(o.targets_file);
  if (!o.proxy.empty()) cfg.proxy = parse_proxy(o.proxy);
  if (o.seed) cfg.rng_seed = *o.seed;
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  if (o.workers) cfg.workers = *o.workers;
  if (!o.captcha_policy.empty()) cfg.captcha_policy = parse_captcha_policy(o.captcha_policy);
  if (o.captcha_timeout_s) cfg.captcha_timeout = seconds(*o.captcha_timeout_s);
  if (o.api_port) cfg.api_port = *o.api_port;
  if (o.retries) cfg.retries = *o.retries;
  if (o.politeness_delay_ms) cfg.politeness_delay = Millis(*o.politeness_delay_ms);
  if (o.request_timeout_ms) cfg.request_timeout = Millis(*o.request_timeout_ms);
  if (o.rotation_period) cfg.rotation_period = *o.rotation_period;
  return cfg;
}

void setup_logging(const std::string& level) {
  auto logger = spdlog::stderr_color_mt("onioncrawl");
  spdlog::set_default_logger(logger);
  const auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && level != "off") {
    throw ConfigError("unknown log level: " + level);
  }
  spdlog::set_level(lvl);
}

MarketMetadata mock_metadata(const mockmarket::MockMarket& market) {
  MarketMetadata meta;
  meta.market_name = "mockmarket";
  meta.starting_links = {market.url(0)};
  meta.expected_home_marker = mockmarket::kHomeMarker;
  if (market.spec().login_required) {
    Credentials c;
    c.username = market.spec().username;
    c.password = market.spec().password;
    c.login_path = "/login";
    c.username_field = "username";
    c.password_field = "password";
    meta.credentials = c;
  }
  return meta;
}

int run_crawl(const Overrides& o, const std::string& meta_file) {
  const auto meta = load_market_metadata(meta_file);
  Crawler crawler(validate_config(build_config(o)), meta);
  const auto summary = crawler.run();
  std::cout << summary.to_json().dump(2) << std::endl;
  return 0;
}

int run_bench(Overrides o, const std::string& meta_file, const std::string& mock_spec_file,
              const std::vector<int>& depths, int runs) {
  if (meta_file.empty() == mock_spec_file.empty()) {
    throw ConfigError("bench needs exactly one of --market-meta or --mock-spec");
  }
  if (runs < 1) throw ConfigError("--runs must be at least 1");
  if (depths.empty()) throw ConfigError("--depths must list at least one depth");

  std::optional<mockmarket::SiteSpec> site;
  if (!mock_spec_file.empty()) {
    std::ifstream in(mock_spec_file);
    if (!in) throw ConfigError("cannot open mock spec: " + mock_spec_file);
    try {
      site = mockmarket::parse_site_spec(nlohmann::json::parse(in));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("bad mock spec: ") + e.what());
    }
  }
  const std::filesystem::path root = o.output_dir.empty() ? "bench-output" : o.output_dir;

  std::vector<RunRecord> records;
  for (int depth : depths) {
    for (int run = 1; run <= runs; ++run) {
      // A fresh market per run so no server-side state carries over.
      std::unique_ptr<mockmarket::MockMarket> market;
      MarketMetadata meta;
      if (site) {
        market = std::make_unique<mockmarket::MockMarket>(*site);
        meta = mock_metadata(*market);
      } else {
        meta = load_market_metadata(meta_file);
      }
      o.max_depth = depth;
      o.output_dir = (root / ("depth-" + std::to_string(depth)) / ("run-" + std::to_string(run)))
                         .string();
      auto summary = crawl(validate_config(build_config(o)), meta);
      spdlog::info("depth {} run {}: {} downloaded of {} identified", depth, run,
                   summary.metrics.downloaded, summary.metrics.identified);
      records.push_back(RunRecord{depth, summary.metrics});
    }
  }
  const auto report = build_report(records);
  emit_report(report, ReportFormat::kJson, root / "report.json");
  emit_report(report, ReportFormat::kCsv, root / "report.csv");
  emit_report(report, ReportFormat::kMarkdown, root / "report.md");
  std::cout << render_markdown(report);
  return 0;
}

int run_report(const std::vector<std::string>& summaries, const std::string& format,
               const std::string& out) {
  std::vector<RunRecord> records;
  for (const auto& file : summaries) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open summary: " + file);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(file + ": " + e.what());
    }
    if (!j.contains("max_depth") || !j["max_depth"].is_number_integer()) {
      throw ConfigError(file + ": summary has no max_depth to group by");
    }
    records.push_back(RunRecord{j["max_depth"].get<int>(), RunMetrics::from_json(j.at("metrics"))});
  }
  const auto report = build_report(records);
  const auto fmt = parse_report_format(format);
  if (out.empty()) {
    std::cout << render_report(report, fmt);
  } else {
    emit_report(report, fmt, out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"onion marketplace crawler"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

  Overrides crawl_flags;
  std::string meta_file;
  auto* crawl_cmd = app.add_subcommand("crawl", "crawl one market");
  crawl_cmd->add_option("--market-meta", meta_file, "market metadata JSON")->required();
  add_crawl_flags(*crawl_cmd, crawl_flags, true);

  Overrides bench_flags;
  std::string bench_meta, mock_spec;
  std::vector<int> depths = {1, 2, 3, 4};
  int runs = 10;
  auto* bench_cmd = app.add_subcommand("bench", "repeat crawls per depth and aggregate");
  bench_cmd->add_option("--market-meta", bench_meta, "market metadata JSON");
  bench_cmd->add_option("--mock-spec", mock_spec, "crawl a local mock market built from this spec");
  bench_cmd->add_option("--depths", depths, "depth levels")->delimiter(',');
  bench_cmd->add_option("--runs", runs, "runs per depth");
  add_crawl_flags(*bench_cmd, bench_flags, false);

  std::vector<std::string> summaries;
  std::string format = "markdown";
  std::string out;
  auto* report_cmd = app.add_subcommand("report", "aggregate summary.json files by max_depth");
  report_cmd->add_option("summaries", summaries, "summary.json files")->required();
  report_cmd->add_option("--format", format, "json, csv or markdown");
  report_cmd->add_option("--out", out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    setup_logging(log_level);
    if (*crawl_cmd) return run_crawl(crawl_flags, meta_file);
    if (*bench_cmd) return run_bench(bench_flags, bench_meta, mock_spec, depths, runs);
    return run_report(summaries, format, out);
  } catch (const CrawlError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(e.code());
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(ExitCode::kConfig);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
