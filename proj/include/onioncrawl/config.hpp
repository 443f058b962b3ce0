#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "onioncrawl/url.hpp"

namespace onioncrawl {

using Millis = std::chrono::milliseconds;

enum class CookieSource { kManual, kLogin };

struct CookieSpec {
  std::string name;
  std::string value;
  std::string domain;
  std::string path = "/";
  CookieSource source = CookieSource::kManual;

  friend bool operator==(const CookieSpec&, const CookieSpec&) = default;
};

struct Credentials {
  std::string username;
  std::string password;
  std::string login_path;
  std::string username_field;
  std::string password_field;
  // Kept in document order; the login body is emitted in this order.
  std::vector<std::pair<std::string, std::string>> extra_fields;

  friend bool operator==(const Credentials&, const Credentials&) = default;
};

// Per-market dossier: where to start, how to authenticate, what a captcha
// wall looks like on this site.
struct MarketMetadata {
  std::string market_name;
  std::vector<std::string> starting_links;
  std::optional<Credentials> credentials;
  std::vector<CookieSpec> cookies;
  std::vector<std::string> captcha_hints;
  std::string expected_home_marker;

  friend bool operator==(const MarketMetadata&, const MarketMetadata&) = default;
};

// Throws ConfigError. Unknown keys are skipped and reported in warnings (and
// logged).
MarketMetadata load_market_metadata(const std::filesystem::path& path,
                                    std::vector<std::string>* warnings = nullptr);
MarketMetadata parse_market_metadata(std::string_view text,
                                     std::vector<std::string>* warnings = nullptr);
std::string serialize_market_metadata(const MarketMetadata& meta);

enum class ProxyKind {
  kSocks5h,  // name resolution on the proxy side
  kSocks5,   // local name resolution
  kHttp,
};

struct ProxyEndpoint {
  ProxyKind kind = ProxyKind::kSocks5h;
  std::string host;
  int port = 0;

  // Whether hostnames are handed to the proxy unresolved.
  bool remote_dns() const { return kind != ProxyKind::kSocks5; }
  std::string to_string() const;

  friend bool operator==(const ProxyEndpoint&, const ProxyEndpoint&) = default;
};

// Accepts socks5h://host:port, socks5://host:port and http://host:port.
ProxyEndpoint parse_proxy(std::string_view text);

struct CaptchaPolicy {
  enum class Kind {
    kInteractive,  // control API, or a stdin prompt when no API is served
    kAbandon,      // wait for the API up to the timeout, then give up
    kFail,         // give up immediately
    kScript,       // answers read from script_file
  };
  Kind kind = Kind::kInteractive;
  std::filesystem::path script_file;
};

// "interactive", "abandon", "fail" or "script:<file>".
CaptchaPolicy parse_captcha_policy(std::string_view text);
std::string to_string(const CaptchaPolicy& policy);

const std::vector<std::string>& default_user_agents();

inline constexpr std::uint64_t kDefaultSeed = 42;

struct CrawlConfig {
  // Stop criteria; nullopt means unbounded.
  std::optional<int> max_depth;
  std::optional<std::size_t> max_links;
  std::optional<Millis> time_limit;
  std::optional<std::vector<CanonicalUrl>> target_links;

  std::optional<ProxyEndpoint> proxy;
  std::vector<std::string> user_agents;  // empty: bundled defaults
  Millis request_timeout{30'000};
  int retries = 2;
  Millis politeness_delay{500};
  Millis backoff_base{250};
  std::uint64_t rng_seed = kDefaultSeed;
  std::filesystem::path output_dir = "crawl-output";
  int workers = 1;

  // Successful requests served by one cookie before rotating to the next.
  int rotation_period = 25;
  CaptchaPolicy captcha_policy;
  Millis captcha_timeout{10 * 60'000};
  // Serve the control API on this port (0 picks a free one).
  std::optional<int> api_port;
};

// Reads a JSON config document. Keys mirror CrawlConfig; durations are
// given as time_limit_s, request_timeout_ms, politeness_delay_ms,
// backoff_base_ms, captcha_timeout_s.
CrawlConfig load_crawl_config(const std::filesystem::path& path);
CrawlConfig parse_crawl_config(std::string_view text);

// One URL per line; blank lines and '#' comments ignored.
std::vector<CanonicalUrl> load_targets_file(const std::filesystem::path& path);

// A configuration that passed validate_config. Immutable.
class ValidatedConfig {
 public:
  const CrawlConfig& get() const { return cfg_; }
  const CrawlConfig* operator->() const { return &cfg_; }

 private:
  explicit ValidatedConfig(CrawlConfig cfg) : cfg_(std::move(cfg)) {}
  friend ValidatedConfig validate_config(CrawlConfig cfg);

  CrawlConfig cfg_;
};

// Fills defaults and checks invariants; throws ConfigError.
ValidatedConfig validate_config(CrawlConfig cfg);

}  // namespace onioncrawl
