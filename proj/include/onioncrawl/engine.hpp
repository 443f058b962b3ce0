#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "onioncrawl/captcha.hpp"
#include "onioncrawl/config.hpp"
#include "onioncrawl/control.hpp"
#include "onioncrawl/extractor.hpp"
#include "onioncrawl/frontier.hpp"
#include "onioncrawl/metrics.hpp"

namespace onioncrawl {

enum class StopReason {
  kMaxDepth,
  kMaxLinks,
  kTimeLimit,
  kTargetsComplete,
  kFrontierExhausted,
  kOperatorStop,
};
std::string_view to_string(StopReason r);

struct CrawlState {
  SystemClock::time_point started_at;
  std::size_t pages_identified = 0;
  std::size_t pages_downloaded = 0;
  std::size_t pages_failed = 0;
  std::size_t pages_duplicate = 0;
  std::size_t pages_skipped = 0;
  int current_depth_in_flight = 0;
  std::optional<std::size_t> targets_remaining;  // set when targets are configured
  std::optional<StopReason> stop_reason;
};

// First satisfied criterion in the order TimeLimit, MaxLinks,
// TargetsComplete, FrontierExhausted. work_left covers both queued and
// in-flight URLs. Over-depth links are never enqueued, so a depth bound shows
// up as exhaustion.
std::optional<StopReason> should_stop(const CrawlState& state, const CrawlConfig& cfg,
                                      std::chrono::milliseconds elapsed, bool work_left);

struct CookieRotation {
  std::size_t after_requests = 0;  // successful requests when it happened
  std::string cause;               // "period", "unexpected_redirect", "exhausted"
  std::optional<std::size_t> from;
  std::optional<std::size_t> to;
  bool relogin = false;
};

struct CrawlSummary {
  CrawlState state;
  SystemClock::time_point finished_at;
  double elapsed_s = 0;
  std::optional<CanonicalUrl> starting_link;
  RunMetrics metrics;
  std::filesystem::path manifest_path;
  std::vector<PageRecord> records;
  std::vector<FrontierEntry> dequeued;  // in dequeue order
  std::vector<std::string> enqueued;    // canonical URLs, in enqueue order
  std::vector<CaptchaChallenge> challenges;
  std::vector<CookieRotation> rotations;
  std::optional<int> max_depth;
  int workers = 1;
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json() const;
};

// One crawl of one market. The control API (when configured) is bound in the
// constructor so its port is known before run() starts.
class Crawler {
 public:
  Crawler(ValidatedConfig cfg, MarketMetadata meta);
  ~Crawler();
  Crawler(const Crawler&) = delete;
  Crawler& operator=(const Crawler&) = delete;

  // Source of answers for the interactive policy when no API is served.
  // Defaults to stdin/stdout.
  void set_prompt_streams(std::istream& in, std::ostream& out);

  std::optional<int> api_port() const;
  ControlPlane& control() { return *plane_; }

  // Runs to completion and writes summary.json. Throws CrawlError subclasses
  // for configuration, starting-link and storage failures.
  CrawlSummary run();

 private:
  class Loop;

  ValidatedConfig cfg_;
  MarketMetadata meta_;
  std::unique_ptr<ControlPlane> plane_;
  std::unique_ptr<ControlServer> server_;
  std::istream* prompt_in_;
  std::ostream* prompt_out_;
};

CrawlSummary crawl(const ValidatedConfig& cfg, const MarketMetadata& meta);

}  // namespace onioncrawl
