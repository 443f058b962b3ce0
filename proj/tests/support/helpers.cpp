#include "helpers.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace testsupport {

TempDir::TempDir() {
  std::random_device rd;
  for (int i = 0; i < 100; ++i) {
    auto candidate = std::filesystem::temp_directory_path() /
                     ("onioncrawl-test-" + std::to_string(rd()));
    if (std::filesystem::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
  throw std::runtime_error("cannot create a temp dir");
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

onioncrawl::MarketMetadata mock_metadata(const mockmarket::MockMarket& market) {
  onioncrawl::MarketMetadata meta;
  meta.market_name = "mock";
  meta.starting_links = {market.url(0)};
  meta.expected_home_marker = mockmarket::kHomeMarker;
  if (market.spec().login_required) {
    onioncrawl::Credentials c;
    c.username = market.spec().username;
    c.password = market.spec().password;
    c.login_path = "/login";
    c.username_field = "username";
    c.password_field = "password";
    meta.credentials = c;
  }
  return meta;
}

onioncrawl::CrawlConfig fast_config(const std::filesystem::path& output_dir) {
  onioncrawl::CrawlConfig cfg;
  cfg.output_dir = output_dir;
  cfg.max_depth = 1000;
  cfg.politeness_delay = onioncrawl::Millis(0);
  cfg.backoff_base = onioncrawl::Millis(5);
  cfg.request_timeout = onioncrawl::Millis(5000);
  cfg.captcha_policy.kind = onioncrawl::CaptchaPolicy::Kind::kFail;
  return cfg;
}

std::set<std::string> page_urls(const mockmarket::MockMarket& market, const std::set<int>& pages) {
  std::set<std::string> out;
  for (int p : pages) out.insert(market.url(p));
  return out;
}

std::set<std::string> urls_with(const onioncrawl::CrawlSummary& summary,
                                onioncrawl::Outcome outcome) {
  std::set<std::string> out;
  for (const auto& r : summary.records) {
    if (r.outcome == outcome) out.insert(r.url);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace testsupport
