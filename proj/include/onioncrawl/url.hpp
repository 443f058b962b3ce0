#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace onioncrawl {

// Normalized absolute http(s) URL; the unit of frontier identity.
//
// Invariants: scheme and host are lowercase, default ports are elided, the
// path is absolute with no dot segments and no trailing slash (except "/"),
// the fragment is dropped and an empty query is absent.
struct CanonicalUrl {
  std::string scheme;
  std::string host;
  std::optional<int> port;
  std::string path = "/";
  std::optional<std::string> query;

  // scheme://host[:port]/path[?query]
  std::string to_string() const;
  // scheme://host[:port]
  std::string origin() const;
  // path[?query], the request target in origin form.
  std::string target() const;
  int effective_port() const;
  bool is_onion() const;

  // Parses an absolute URL; throws std::invalid_argument when the input is
  // not an absolute http(s) URL.
  static CanonicalUrl parse(std::string_view raw);

  friend bool operator==(const CanonicalUrl&, const CanonicalUrl&) = default;
};

// Resolves raw against base and canonicalizes the result. Returns nullopt
// (the skip signal) for unparseable input and unsupported schemes such as
// mailto: or javascript:.
std::optional<CanonicalUrl> normalize_url(std::string_view raw,
                                          const CanonicalUrl& base);

// Same, for input that must already be absolute.
std::optional<CanonicalUrl> normalize_url(std::string_view raw);

// Resolves a redirect Location against the absolute URL that produced it,
// keeping a trailing slash so the server sees the exact target it asked for.
std::optional<std::string> resolve_location(std::string_view raw,
                                            std::string_view base);

// Crawl scope: exact host equality.
bool is_internal(const CanonicalUrl& url, const CanonicalUrl& scope);

}  // namespace onioncrawl

template <>
struct std::hash<onioncrawl::CanonicalUrl> {
  std::size_t operator()(const onioncrawl::CanonicalUrl& u) const noexcept {
    return std::hash<std::string>{}(u.to_string());
  }
};
