#pragma once

#include <filesystem>
#include <set>
#include <string>

#include "mockmarket/mockmarket.hpp"
#include "onioncrawl/config.hpp"
#include "onioncrawl/engine.hpp"

namespace testsupport {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Metadata pointing at a running mock market; credentials only when the
// site requires login.
onioncrawl::MarketMetadata mock_metadata(const mockmarket::MockMarket& market);

// Fast settings for local crawls: no politeness delay, short backoff, and a
// depth bound no mock site reaches.
onioncrawl::CrawlConfig fast_config(const std::filesystem::path& output_dir);

// Canonical URLs of the given mock pages.
std::set<std::string> page_urls(const mockmarket::MockMarket& market, const std::set<int>& pages);

// URLs of records with the given outcome.
std::set<std::string> urls_with(const onioncrawl::CrawlSummary& summary,
                                onioncrawl::Outcome outcome);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace testsupport
