#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "onioncrawl/errors.hpp"
#include "onioncrawl/extractor.hpp"
#include "onioncrawl/html.hpp"

using namespace onioncrawl;

namespace {

const auto kBase = CanonicalUrl::parse("http://m.onion/shop/list");

std::vector<std::string> links(std::string_view body) {
  std::vector<std::string> out;
  for (const auto& u : extract_links(body, kBase)) out.push_back(u.to_string());
  return out;
}

PageRecord record(std::string url) {
  PageRecord r;
  r.url = std::move(url);
  r.depth = 1;
  r.status = 200;
  r.outcome = Outcome::kDownloaded;
  r.fetched_at = "2026-01-01T00:00:00.000Z";
  r.elapsed_ms = 12;
  return r;
}

}  // namespace

TEST_SUITE("extractor") {

TEST_CASE("anchors are resolved, canonicalized and deduplicated in order") {
  CHECK(links("<a href=\"item?id=2\">a</a><A HREF='/shop/item?id=2#x'>b</A>"
              "<a href=../about/>c</a><a name=\"top\">no href</a>") ==
        std::vector<std::string>{"http://m.onion/shop/item?id=2", "http://m.onion/about"});
}

TEST_CASE("non-http schemes and external hosts are kept apart") {
  const auto got = links("<a href=\"mailto:x@m.onion\">m</a><a href=\"javascript:go()\">j</a>"
                         "<a href=\"http://other.onion/\">ext</a>");
  CHECK(got == std::vector<std::string>{"http://other.onion/"});
}

TEST_CASE("entities in attribute values are decoded") {
  CHECK(links("<a href=\"/s?a=1&amp;b=2\">x</a>") ==
        std::vector<std::string>{"http://m.onion/s?a=1&b=2"});
  CHECK(html::decode_entities("&lt;&gt;&quot;&#39;&#x41;&amp;amp;") == "<>\"'A&amp;");
}

TEST_CASE("comments, scripts and styles hide their markup") {
  CHECK(links("<!-- <a href=\"/hidden\">x</a> --><script>var s='<a href=\"/js\">';</script>"
              "<style>a[href='/css']{}</style><a href=\"/shown\">y</a>") ==
        std::vector<std::string>{"http://m.onion/shown"});
}

TEST_CASE("the first base element changes resolution") {
  CHECK(links("<base href=\"http://m.onion/deep/dir/\"><base href=\"/ignored/\">"
              "<a href=\"x\">x</a>") == std::vector<std::string>{"http://m.onion/deep/dir/x"});
}

TEST_CASE("broken markup does not throw") {
  CHECK(links("<a href=\"/ok\">ok</a><a href=\"/unterminated").size() == 1);
  CHECK(links("<<<>>><a href>").empty());
  CHECK(links("").empty());
}

TEST_CASE("sha-256 digests match published test vectors") {
  CHECK(content_digest("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(content_digest("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("manifest records keep the fixed key order and round-trip") {
  auto r = record("http://m.onion/p/1");
  r.digest = "ab";
  r.stored_path = "pages/ab.html";
  CHECK(r.to_json().dump() ==
        R"({"url":"http://m.onion/p/1","depth":1,"status":200,"outcome":"downloaded",)"
        R"("digest":"ab","path":"pages/ab.html","fetched_at":"2026-01-01T00:00:00.000Z",)"
        R"("elapsed_ms":12})");
  auto f = record("http://m.onion/p/2");
  f.outcome = Outcome::kFailed;
  f.status = 404;
  f.cause = "not_found";
  const auto j = f.to_json();
  CHECK(j["digest"].is_null());
  CHECK(j["path"].is_null());
  CHECK(j["cause"] == "not_found");
  const auto back = PageRecord::from_json(j);
  CHECK(back.cause == "not_found");
  CHECK(back.outcome == Outcome::kFailed);
  CHECK_THROWS_AS(parse_outcome("lost"), std::invalid_argument);
}

TEST_CASE("page store writes once per digest and appends every record") {
  testsupport::TempDir dir;
  PageStore store(dir.path());
  auto a = store.store(record("http://m.onion/p/1"), "<html>one</html>");
  CHECK(a.outcome == Outcome::kDownloaded);
  CHECK(a.stored_path == "pages/" + content_digest("<html>one</html>") + ".html");
  CHECK(testsupport::read_file(dir.path() / a.stored_path) == "<html>one</html>");

  auto mirror = store.store(record("http://m.onion/p/9"), "<html>one</html>");
  CHECK(mirror.outcome == Outcome::kDuplicate);
  CHECK(mirror.digest == a.digest);
  CHECK(mirror.stored_path.empty());

  auto failed = record("http://m.onion/p/3");
  failed.outcome = Outcome::kFailed;
  failed.cause = "not_found";
  store.append(failed);
  CHECK(store.record_count() == 3);

  const auto manifest = load_manifest(store.manifest_path());
  REQUIRE(manifest.size() == 3);
  CHECK(manifest[0].outcome == Outcome::kDownloaded);
  CHECK(manifest[1].outcome == Outcome::kDuplicate);
  CHECK(manifest[2].cause == "not_found");
  CHECK_FALSE(std::filesystem::exists(dir.path() / (a.stored_path + ".tmp")));
}

TEST_CASE("a directory with a manifest is refused") {
  testsupport::TempDir dir;
  { PageStore first(dir.path()); }
  CHECK_THROWS_AS(PageStore(dir.path()), ConfigError);
}

TEST_CASE("an unwritable output directory is a storage error") {
  testsupport::TempDir dir;
  testsupport::write_file(dir / "file", "x");
  CHECK_THROWS_AS(PageStore(dir / "file" / "sub"), StorageError);
}

}  // TEST_SUITE
