#include <doctest.h>

#include "onioncrawl/config.hpp"
#include "onioncrawl/errors.hpp"
#include "helpers.hpp"

using namespace onioncrawl;

namespace {

const char* kFullMetadata = R"({
  "market_name": "Example",
  "starting_links": ["http://abc.onion/", "http://mirror.onion/"],
  "credentials": {
    "username": "alice", "password": "s3cret", "login_path": "/login",
    "username_field": "user", "password_field": "pass",
    "extra_fields": {"remember": "1", "csrf": "x"}
  },
  "cookies": [{"name": "session", "value": "v1", "domain": "abc.onion"},
              {"name": "session", "value": "v2", "domain": "abc.onion", "path": "/shop"}],
  "captcha_hints": ["prove you are human"],
  "expected_home_marker": "Welcome back",
  "favourite_colour": "green"
})";

}  // namespace

TEST_SUITE("config") {

TEST_CASE("market metadata parses every field and keeps extra field order") {
  std::vector<std::string> warnings;
  const auto meta = parse_market_metadata(kFullMetadata, &warnings);
  CHECK(meta.market_name == "Example");
  CHECK(meta.starting_links.size() == 2);
  REQUIRE(meta.credentials);
  CHECK(meta.credentials->username_field == "user");
  REQUIRE(meta.credentials->extra_fields.size() == 2);
  CHECK(meta.credentials->extra_fields[0].first == "remember");
  CHECK(meta.credentials->extra_fields[1].first == "csrf");
  REQUIRE(meta.cookies.size() == 2);
  CHECK(meta.cookies[0].path == "/");
  CHECK(meta.cookies[1].path == "/shop");
  CHECK(meta.captcha_hints == std::vector<std::string>{"prove you are human"});
  CHECK(meta.expected_home_marker == "Welcome back");
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("favourite_colour") != std::string::npos);
}

TEST_CASE("market metadata round-trips through serialization") {
  const auto meta = parse_market_metadata(kFullMetadata);
  CHECK(parse_market_metadata(serialize_market_metadata(meta)) == meta);
}

TEST_CASE("malformed market metadata is a config error") {
  CHECK_THROWS_AS(parse_market_metadata("{"), ConfigError);
  CHECK_THROWS_AS(parse_market_metadata("[]"), ConfigError);
  CHECK_THROWS_AS(parse_market_metadata(R"({"starting_links": []})"), ConfigError);
  CHECK_THROWS_AS(parse_market_metadata(R"({"starting_links": [1]})"), ConfigError);
  CHECK_THROWS_AS(parse_market_metadata(
                      R"({"starting_links": ["http://a.onion/"], "credentials": {"username": "u"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_market_metadata(
                      R"({"starting_links": ["http://a.onion/"], "cookies": [{"name": "s"}]})"),
                  ConfigError);
  CHECK_THROWS_AS(load_market_metadata("/nonexistent/meta.json"), ConfigError);
}

TEST_CASE("proxy strings") {
  auto p = parse_proxy("socks5h://127.0.0.1:9050");
  CHECK(p.kind == ProxyKind::kSocks5h);
  CHECK(p.remote_dns());
  CHECK(p.port == 9050);
  CHECK(p.to_string() == "socks5h://127.0.0.1:9050");
  CHECK_FALSE(parse_proxy("socks5://localhost:9050").remote_dns());
  CHECK(parse_proxy("http://proxy:8118/").kind == ProxyKind::kHttp);
  CHECK_THROWS_AS(parse_proxy("127.0.0.1:9050"), ConfigError);
  CHECK_THROWS_AS(parse_proxy("socks4://h:1"), ConfigError);
  CHECK_THROWS_AS(parse_proxy("socks5h://h:0"), ConfigError);
  CHECK_THROWS_AS(parse_proxy("socks5h://h:70000"), ConfigError);
  CHECK_THROWS_AS(parse_proxy("socks5h://h"), ConfigError);
}

TEST_CASE("captcha policy strings") {
  CHECK(parse_captcha_policy("interactive").kind == CaptchaPolicy::Kind::kInteractive);
  CHECK(parse_captcha_policy("abandon").kind == CaptchaPolicy::Kind::kAbandon);
  CHECK(parse_captcha_policy("fail").kind == CaptchaPolicy::Kind::kFail);
  const auto s = parse_captcha_policy("script:answers.txt");
  CHECK(s.kind == CaptchaPolicy::Kind::kScript);
  CHECK(s.script_file == "answers.txt");
  CHECK(to_string(s) == "script:answers.txt");
  CHECK_THROWS_AS(parse_captcha_policy("script:"), ConfigError);
  CHECK_THROWS_AS(parse_captcha_policy("solve"), ConfigError);
}

TEST_CASE("crawl config document maps onto fields") {
  const auto cfg = parse_crawl_config(R"({
    "max_depth": 3, "max_links": 50, "time_limit_s": 1.5,
    "targets": ["http://a.onion/x/"], "proxy": "socks5h://127.0.0.1:9050",
    "request_timeout_ms": 1000, "retries": 4, "politeness_delay_ms": 0,
    "backoff_base_ms": 10, "rng_seed": 7, "output_dir": "out", "workers": 2,
    "rotation_period": 9, "captcha_policy": "abandon", "captcha_timeout_s": 2,
    "api_port": 0
  })");
  CHECK(cfg.max_depth == 3);
  CHECK(cfg.max_links == 50u);
  CHECK(cfg.time_limit == Millis(1500));
  REQUIRE(cfg.target_links);
  CHECK(cfg.target_links->front().to_string() == "http://a.onion/x");
  CHECK(cfg.proxy->port == 9050);
  CHECK(cfg.request_timeout == Millis(1000));
  CHECK(cfg.retries == 4);
  CHECK(cfg.politeness_delay == Millis(0));
  CHECK(cfg.backoff_base == Millis(10));
  CHECK(cfg.rng_seed == 7u);
  CHECK(cfg.output_dir == "out");
  CHECK(cfg.workers == 2);
  CHECK(cfg.rotation_period == 9);
  CHECK(cfg.captcha_policy.kind == CaptchaPolicy::Kind::kAbandon);
  CHECK(cfg.captcha_timeout == Millis(2000));
  CHECK(cfg.api_port == 0);
}

TEST_CASE("crawl config defaults") {
  const CrawlConfig cfg;
  CHECK(cfg.workers == 1);
  CHECK(cfg.retries == 2);
  CHECK(cfg.politeness_delay == Millis(500));
  CHECK(cfg.rng_seed == kDefaultSeed);
  CHECK(cfg.rotation_period == 25);
  CHECK(cfg.captcha_policy.kind == CaptchaPolicy::Kind::kInteractive);
  CHECK_FALSE(cfg.api_port.has_value());
}

TEST_CASE("crawl config type errors are config errors") {
  CHECK_THROWS_AS(parse_crawl_config(R"({"max_depth": "deep"})"), ConfigError);
  CHECK_THROWS_AS(parse_crawl_config(R"({"time_limit_s": -1})"), ConfigError);
  CHECK_THROWS_AS(parse_crawl_config(R"({"targets": ["mailto:x@y"]})"), ConfigError);
  CHECK_THROWS_AS(parse_crawl_config("nope"), ConfigError);
}

TEST_CASE("validation rejects non-terminating and out-of-range configs") {
  CrawlConfig cfg;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg.max_depth = 2;
  const auto ok = validate_config(cfg);
  CHECK(ok->user_agents == default_user_agents());

  auto bad = cfg;
  bad.workers = 0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = cfg;
  bad.max_depth = -1;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = cfg;
  bad.max_links = 0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = cfg;
  bad.target_links = std::vector<CanonicalUrl>{};
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = cfg;
  bad.retries = -1;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = cfg;
  bad.request_timeout = Millis(0);
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = cfg;
  bad.rotation_period = 0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = cfg;
  bad.api_port = 70000;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = cfg;
  bad.user_agents = {"ua", ""};
  CHECK_THROWS_AS(validate_config(bad), ConfigError);

  CrawlConfig only_time;
  only_time.time_limit = Millis(0);
  CHECK_NOTHROW(validate_config(only_time));
}

TEST_CASE("targets file skips blanks and comments") {
  testsupport::TempDir dir;
  testsupport::write_file(dir / "targets.txt",
                          "# wanted pages\n\nhttp://a.onion/p/1\n  http://A.onion/p/2/  \n");
  const auto targets = load_targets_file(dir / "targets.txt");
  REQUIRE(targets.size() == 2);
  CHECK(targets[1].to_string() == "http://a.onion/p/2");
  testsupport::write_file(dir / "bad.txt", "not a url\n");
  CHECK_THROWS_AS(load_targets_file(dir / "bad.txt"), ConfigError);
}

}  // TEST_SUITE
