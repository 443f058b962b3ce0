#include "onioncrawl/extractor.hpp"

#include <cstdio>
#include <stdexcept>
#include <system_error>
#include <unordered_set>

#include <openssl/evp.h>

#include "onioncrawl/errors.hpp"
#include "onioncrawl/html.hpp"

namespace onioncrawl {

std::vector<CanonicalUrl> extract_links(std::string_view body, const CanonicalUrl& base) {
  std::vector<CanonicalUrl> out;
  std::unordered_set<std::string> seen;
  // A <base> keeps its trailing slash: "dir/" and "dir" resolve differently.
  std::optional<std::string> base_href;
  html::scan_tags(body, [&](const html::Tag& tag) {
    if (tag.name == "base" && !base_href) {
      if (const auto* href = tag.attribute("href")) {
        base_href = resolve_location(*href, base.to_string());
      }
      return;
    }
    if (tag.name != "a") return;
    const auto* href = tag.attribute("href");
    // An empty reference is the document itself.
    if (!href || href->find_first_not_of(" \t\r\n\f") == std::string::npos) return;
    std::optional<CanonicalUrl> url;
    if (base_href) {
      if (auto abs = resolve_location(*href, *base_href)) url = normalize_url(*abs);
    } else {
      url = normalize_url(*href, base);
    }
    if (!url) return;
    if (seen.insert(url->to_string()).second) out.push_back(std::move(*url));
  });
  return out;
}

std::string content_digest(std::string_view body) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(body.data(), body.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 0xF];
  }
  return hex;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kDownloaded: return "downloaded";
    case Outcome::kFailed: return "failed";
    case Outcome::kDuplicate: return "duplicate";
    case Outcome::kSkipped: return "skipped";
  }
  return "failed";
}

Outcome parse_outcome(std::string_view s) {
  if (s == "downloaded") return Outcome::kDownloaded;
  if (s == "failed") return Outcome::kFailed;
  if (s == "duplicate") return Outcome::kDuplicate;
  if (s == "skipped") return Outcome::kSkipped;
  throw std::invalid_argument("unknown outcome: " + std::string(s));
}

nlohmann::ordered_json PageRecord::to_json() const {
  nlohmann::ordered_json j;
  j["url"] = url;
  j["depth"] = depth;
  j["status"] = status;
  j["outcome"] = to_string(outcome);
  j["digest"] = digest ? nlohmann::ordered_json(*digest) : nlohmann::ordered_json(nullptr);
  j["path"] = stored_path.empty() ? nlohmann::ordered_json(nullptr)
                                  : nlohmann::ordered_json(stored_path);
  j["fetched_at"] = fetched_at;
  j["elapsed_ms"] = elapsed_ms;
  if (!cause.empty()) j["cause"] = cause;
  return j;
}

PageRecord PageRecord::from_json(const nlohmann::ordered_json& j) {
  PageRecord r;
  r.url = j.at("url").get<std::string>();
  r.depth = j.at("depth").get<int>();
  r.status = j.at("status").get<int>();
  r.outcome = parse_outcome(j.at("outcome").get<std::string>());
  if (!j.at("digest").is_null()) r.digest = j.at("digest").get<std::string>();
  if (!j.at("path").is_null()) r.stored_path = j.at("path").get<std::string>();
  r.fetched_at = j.at("fetched_at").get<std::string>();
  r.elapsed_ms = j.at("elapsed_ms").get<std::int64_t>();
  if (auto it = j.find("cause"); it != j.end()) r.cause = it->get<std::string>();
  return r;
}

std::vector<PageRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::vector<PageRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(PageRecord::from_json(nlohmann::ordered_json::parse(line)));
  }
  return out;
}

PageStore::PageStore(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_ / kPagesDir, ec);
  if (ec) throw StorageError("cannot create " + (root_ / kPagesDir).string() + ": " + ec.message());
  if (std::filesystem::exists(manifest_path())) {
    throw ConfigError("output directory " + root_.string() +
                      " already holds a manifest; choose a fresh directory");
  }
  manifest_.open(manifest_path(), std::ios::out | std::ios::app);
  if (!manifest_) throw StorageError("cannot open " + manifest_path().string());
}

PageRecord PageStore::store(const PageRecord& meta, std::string_view body) {
  PageRecord r = meta;
  r.digest = content_digest(body);
  const std::string rel = std::string(kPagesDir) + "/" + *r.digest + ".html";
  const auto file = root_ / rel;

  std::lock_guard lock(mu_);
  if (std::filesystem::exists(file)) {
    r.outcome = Outcome::kDuplicate;
    r.stored_path.clear();
  } else {
    const auto tmp = root_ / (rel + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(body.data(), static_cast<std::streamsize>(body.size()));
      out.flush();
      if (!out) throw StorageError("cannot write " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, file, ec);
    if (ec) throw StorageError("cannot store " + file.string() + ": " + ec.message());
    r.outcome = Outcome::kDownloaded;
    r.stored_path = rel;
  }
  write_line(r);
  return r;
}

void PageStore::append(const PageRecord& record) {
  std::lock_guard lock(mu_);
  write_line(record);
}

std::size_t PageStore::record_count() const {
  std::lock_guard lock(mu_);
  return records_;
}

void PageStore::write_line(const PageRecord& record) {
  manifest_ << record.to_json().dump() << '\n';
  manifest_.flush();
  if (!manifest_) throw StorageError("cannot append to " + manifest_path().string());
  ++records_;
}

}  // namespace onioncrawl
