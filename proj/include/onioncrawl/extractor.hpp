#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "onioncrawl/url.hpp"

namespace onioncrawl {

// Targets of a[href], canonicalized against base (or a <base href> in the
// document), deduplicated in first-occurrence order. Unsupported schemes and
// unparseable hrefs are dropped.
std::vector<CanonicalUrl> extract_links(std::string_view body, const CanonicalUrl& base);

// SHA-256, lowercase hex.
std::string content_digest(std::string_view body);

enum class Outcome { kDownloaded, kFailed, kDuplicate, kSkipped };
std::string_view to_string(Outcome o);
Outcome parse_outcome(std::string_view s);

struct PageRecord {
  std::string url;
  int depth = 0;
  int status = 0;
  Outcome outcome = Outcome::kFailed;
  std::optional<std::string> digest;
  std::string stored_path;  // relative to the output dir; empty unless downloaded
  std::string fetched_at;   // RFC 3339
  std::int64_t elapsed_ms = 0;
  std::string cause;        // why a page failed or was skipped

  // Manifest line in the fixed key order url, depth, status, outcome,
  // digest, path, fetched_at, elapsed_ms (then cause when set).
  nlohmann::ordered_json to_json() const;
  static PageRecord from_json(const nlohmann::ordered_json& j);
};

std::vector<PageRecord> load_manifest(const std::filesystem::path& path);

inline constexpr const char* kManifestName = "manifest.jsonl";
inline constexpr const char* kPagesDir = "pages";

// Write-once page store plus append-only manifest under one output dir.
// Refuses (ConfigError) a directory that already holds a manifest; write
// failures throw StorageError.
class PageStore {
 public:
  explicit PageStore(std::filesystem::path root);

  // Stores body under pages/<digest>.html. An existing file with that name
  // makes the record a duplicate. The record is appended to the manifest.
  PageRecord store(const PageRecord& meta, std::string_view body);

  // Appends a record that carries no body (failed or skipped).
  void append(const PageRecord& record);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path manifest_path() const { return root_ / kManifestName; }
  std::size_t record_count() const;

 private:
  void write_line(const PageRecord& record);

  std::filesystem::path root_;
  std::ofstream manifest_;
  mutable std::mutex mu_;
  std::size_t records_ = 0;
};

}  // namespace onioncrawl
