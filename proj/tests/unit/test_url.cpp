#include <doctest.h>

#include <random>
#include <stdexcept>

#include "onioncrawl/url.hpp"

using namespace onioncrawl;

namespace {

std::string norm(std::string_view raw, std::string_view base) {
  auto b = CanonicalUrl::parse(base);
  auto u = normalize_url(raw, b);
  return u ? u->to_string() : "<skip>";
}

}  // namespace

TEST_SUITE("url") {

TEST_CASE("reference resolution follows RFC 3986 examples, minus trailing slashes") {
  // RFC 3986 section 5.4.1 with base http://a/b/c/d;p?q. Expected values are
  // the RFC's, with the trailing slash removed where the RFC keeps one.
  const std::string base = "http://a/b/c/d;p?q";
  CHECK(norm("g", base) == "http://a/b/c/g");
  CHECK(norm("./g", base) == "http://a/b/c/g");
  CHECK(norm("g/", base) == "http://a/b/c/g");
  CHECK(norm("/g", base) == "http://a/g");
  CHECK(norm("//g", base) == "http://g/");
  CHECK(norm("?y", base) == "http://a/b/c/d;p?y");
  CHECK(norm("g?y", base) == "http://a/b/c/g?y");
  CHECK(norm("#s", base) == "http://a/b/c/d;p?q");
  CHECK(norm("g#s", base) == "http://a/b/c/g");
  CHECK(norm(";x", base) == "http://a/b/c/;x");
  CHECK(norm("", base) == "http://a/b/c/d;p?q");
  CHECK(norm(".", base) == "http://a/b/c");
  CHECK(norm("./", base) == "http://a/b/c");
  CHECK(norm("..", base) == "http://a/b");
  CHECK(norm("../g", base) == "http://a/b/g");
  CHECK(norm("../..", base) == "http://a/");
  CHECK(norm("../../g", base) == "http://a/g");
  // Abnormal examples, section 5.4.2.
  CHECK(norm("../../../g", base) == "http://a/g");
  CHECK(norm("/./g", base) == "http://a/g");
  CHECK(norm("/../g", base) == "http://a/g");
  CHECK(norm("g.", base) == "http://a/b/c/g.");
  CHECK(norm("..g", base) == "http://a/b/c/..g");
  CHECK(norm("./../g", base) == "http://a/b/g");
  CHECK(norm("g/./h", base) == "http://a/b/c/g/h");
  CHECK(norm("g/../h", base) == "http://a/b/c/h");
}

TEST_CASE("host, scheme and port are canonicalized") {
  auto u = CanonicalUrl::parse("HTTP://Market.EXAMPLE.onion:80/Item?id=3#reviews");
  CHECK(u.scheme == "http");
  CHECK(u.host == "market.example.onion");
  CHECK_FALSE(u.port.has_value());
  CHECK(u.path == "/Item");
  CHECK(u.query == "id=3");
  CHECK(u.to_string() == "http://market.example.onion/Item?id=3");
  CHECK(u.is_onion());
  CHECK(CanonicalUrl::parse("https://x.test:443/").to_string() == "https://x.test/");
  CHECK(CanonicalUrl::parse("https://x.test:8443").to_string() == "https://x.test:8443/");
  CHECK(CanonicalUrl::parse("http://x.test/a?").to_string() == "http://x.test/a");
  CHECK(CanonicalUrl::parse("http://x.test./a").host == "x.test");
  CHECK(CanonicalUrl::parse("http://user:pw@x.test/").host == "x.test");
}

TEST_CASE("percent escapes are normalized") {
  CHECK(CanonicalUrl::parse("http://x.test/%7euser/%2fa%2Fb").path == "/~user/%2Fa%2Fb");
  CHECK(CanonicalUrl::parse("http://x.test/a b").path == "/a%20b");
  CHECK(CanonicalUrl::parse("http://x.test/?q=%7e").query == "q=%7E");
  CHECK(CanonicalUrl::parse("http://x.test/100%").path == "/100%25");
}

TEST_CASE("unsupported and malformed references are skipped") {
  const std::string base = "http://m.onion/p/1";
  CHECK(norm("mailto:admin@m.onion", base) == "<skip>");
  CHECK(norm("javascript:void(0)", base) == "<skip>");
  CHECK(norm("ftp://m.onion/file", base) == "<skip>");
  CHECK(norm("http://bad host/", base) == "<skip>");
  CHECK(norm("http://m.onion:99999/", base) == "<skip>");
  CHECK_FALSE(normalize_url("/relative/only").has_value());
  CHECK_THROWS_AS(CanonicalUrl::parse("not a url"), std::invalid_argument);
}

TEST_CASE("the markup variants of one page collapse to one URL") {
  const std::string base = "http://m.onion/p/1";
  const std::string want = "http://m.onion/p/7";
  CHECK(norm("/p/7", base) == want);
  CHECK(norm("/p/7/", base) == want);
  CHECK(norm("/p/7#reviews", base) == want);
  CHECK(norm("../p/7", base) == want);
  CHECK(norm("  /p/7\n", base) == want);
  CHECK(norm("HTTP://M.ONION/p/7", base) == want);
}

TEST_CASE("redirect locations keep their trailing slash") {
  CHECK(resolve_location("/login/", "http://m.onion/p/3") == "http://m.onion/login/");
  CHECK(resolve_location("next", "http://m.onion/a/b") == "http://m.onion/a/next");
  CHECK_FALSE(resolve_location("mailto:x@y", "http://m.onion/").has_value());
}

TEST_CASE("internal links share the exact host") {
  const auto scope = CanonicalUrl::parse("http://m.onion/");
  CHECK(is_internal(CanonicalUrl::parse("http://m.onion:8080/x"), scope));
  CHECK(is_internal(CanonicalUrl::parse("https://m.onion/x"), scope));
  CHECK_FALSE(is_internal(CanonicalUrl::parse("http://sub.m.onion/x"), scope));
  CHECK_FALSE(is_internal(CanonicalUrl::parse("http://other.onion/x"), scope));
}

TEST_CASE("normalization is idempotent on generated references") {
  std::mt19937_64 rng(2024);
  const std::vector<std::string> pieces = {"a", "B", ".", "..", "%7e", "%41", "x y", "",
                                           "~", "%2f", "c;d", "é"};
  const auto base = CanonicalUrl::parse("http://m.onion/dir/page");
  for (int i = 0; i < 500; ++i) {
    std::string ref;
    if (rng() % 2) ref += "/";
    const int segs = static_cast<int>(rng() % 5);
    for (int s = 0; s < segs; ++s) {
      ref += pieces[rng() % pieces.size()];
      if (s + 1 < segs || rng() % 3 == 0) ref += "/";
    }
    if (rng() % 3 == 0) ref += "?k=" + pieces[rng() % pieces.size()];
    if (rng() % 4 == 0) ref += "#frag";
    // A leading "//" would be a network-path reference with no host.
    if (ref.rfind("//", 0) == 0) continue;
    const auto once = normalize_url(ref, base);
    REQUIRE_MESSAGE(once.has_value(), ref);
    const auto twice = normalize_url(once->to_string());
    REQUIRE(twice.has_value());
    CHECK_MESSAGE(*twice == *once, ref);
    CHECK(once->path.front() == '/');
    CHECK(once->path.find("/./") == std::string::npos);
    CHECK(once->path.find("/../") == std::string::npos);
    if (once->path.size() > 1) CHECK(once->path.back() != '/');
  }
}

}  // TEST_SUITE
