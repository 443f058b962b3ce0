#include <doctest.h>

#include <sstream>
#include <thread>

#include "helpers.hpp"
#include "onioncrawl/captcha.hpp"
#include "onioncrawl/errors.hpp"

using namespace onioncrawl;

namespace {

const auto kPage = CanonicalUrl::parse("http://m.onion/p/5");

const char* kWall =
    "<html><head><title>Security check</title></head><body>"
    "<h1>Security check</h1><img src=\"/captcha.png?id=5\">"
    "<form method=\"post\" action=\"/p/5/solve\"><input name=\"answer\"></form>"
    "</body></html>";

CaptchaChallenge challenge_at(const CanonicalUrl& url) {
  auto c = detect_captcha(kWall, url, {});
  REQUIRE(c);
  return *c;
}

}  // namespace

TEST_SUITE("captcha") {

TEST_CASE("walls are detected by hint with image and form action captured") {
  auto c = detect_captcha(kWall, kPage, {});
  REQUIRE(c);
  // Hints match markup too, so the image path wins over the heading.
  CHECK(c->matched_pattern == "captcha");
  REQUIRE(c->image_refs.size() == 1);
  CHECK(c->image_refs[0].to_string() == "http://m.onion/captcha.png?id=5");
  CHECK(c->form_action.to_string() == "http://m.onion/p/5/solve");
  CHECK(c->page_excerpt == kWall);
  CHECK(c->state == ChallengeState::kPending);
}

TEST_CASE("market hints win over built-in ones and match case-insensitively") {
  const std::vector<std::string> hints = {"PROVE YOU ARE HUMAN"};
  auto c = detect_captcha("<p>Prove you are human. Security check.</p>", kPage, hints);
  REQUIRE(c);
  CHECK(c->matched_pattern == "PROVE YOU ARE HUMAN");
  CHECK(c->form_action == kPage);
}

TEST_CASE("an input named like a captcha is enough") {
  auto c = detect_captcha("<form><input name=\"captcha_code\"></form>", kPage, {});
  REQUIRE(c);
  CHECK(c->matched_pattern == "captcha");
}

TEST_CASE("ordinary pages are not walls") {
  CHECK_FALSE(detect_captcha("<html><a href=\"/p/1\">Listing</a></html>", kPage, {}));
}

TEST_CASE("excerpt is capped") {
  std::string big = "captcha" + std::string(10000, 'x');
  auto c = detect_captcha(big, kPage, {});
  REQUIRE(c);
  CHECK(c->page_excerpt.size() == kExcerptBytes);
}

TEST_CASE("solution text") {
  auto f = parse_solution_text("answer=5&token=a%20b", "m.onion");
  REQUIRE(f);
  CHECK(f->well_formed());
  REQUIRE(f->fields.size() == 2);
  CHECK(f->fields[1] == std::pair<std::string, std::string>{"token", "a b"});
  auto c = parse_solution_text("cookie:session=xyz", "m.onion");
  REQUIRE(c);
  REQUIRE(c->cookie);
  CHECK(c->cookie->name == "session");
  CHECK(c->cookie->value == "xyz");
  CHECK(c->cookie->domain == "m.onion");
  CHECK(c->fields.empty());
  CHECK_FALSE(parse_solution_text("", "m.onion"));
  CHECK_FALSE(parse_solution_text("cookie:", "m.onion"));
  CHECK_FALSE(parse_solution_text("=3", "m.onion"));
}

TEST_CASE("registry lifecycle") {
  ChallengeRegistry reg;
  const auto a = reg.open(challenge_at(kPage));
  const auto b = reg.open(challenge_at(CanonicalUrl::parse("http://m.onion/p/6")));
  CHECK(a == "c1");
  CHECK(b == "c2");
  CHECK(reg.pending().size() == 2);

  ChallengeSolution bad;
  bad.challenge_id = a;
  CHECK(reg.submit(bad) == SubmitStatus::kInvalid);
  ChallengeSolution good{a, {{"answer", "5"}}, std::nullopt};
  CHECK(reg.submit(good) == SubmitStatus::kAccepted);
  CHECK(reg.find(a)->state == ChallengeState::kSolved);
  CHECK(reg.submit(good) == SubmitStatus::kConflict);
  ChallengeSolution unknown{"c99", {{"answer", "1"}}, std::nullopt};
  CHECK(reg.submit(unknown) == SubmitStatus::kUnknown);

  auto got = reg.await_solution(a, Millis(0));
  REQUIRE(got);
  CHECK(got->fields[0].second == "5");

  CHECK(reg.abandon(b));
  CHECK_FALSE(reg.abandon(b));
  CHECK(reg.find(b)->state == ChallengeState::kAbandoned);
  CHECK(reg.pending().empty());
  CHECK(reg.all().size() == 2);
}

TEST_CASE("await_solution abandons on timeout and wakes on submit") {
  ChallengeRegistry reg;
  const auto a = reg.open(challenge_at(kPage));
  const auto t0 = std::chrono::steady_clock::now();
  CHECK_FALSE(reg.await_solution(a, Millis(50)));
  CHECK(std::chrono::steady_clock::now() - t0 >= std::chrono::milliseconds(50));
  CHECK(reg.find(a)->state == ChallengeState::kAbandoned);

  const auto b = reg.open(challenge_at(kPage));
  std::thread submitter([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    reg.submit(ChallengeSolution{b, {{"answer", "5"}}, std::nullopt});
  });
  auto got = reg.await_solution(b, Millis(5000));
  submitter.join();
  REQUIRE(got);
  CHECK(reg.find(b)->state == ChallengeState::kSolved);

  const auto c = reg.open(challenge_at(kPage));
  std::thread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    reg.abandon_all();
  });
  CHECK_FALSE(reg.await_solution(c, Millis(5000)));
  stopper.join();
}

TEST_CASE("script answers by path or absolute url") {
  auto script = CaptchaScript::parse(
      "# answers\n"
      "/p/5 answer=5\n"
      "http://m.onion/p/6  cookie:session=abc\n"
      "\n");
  auto a = script.lookup(kPage);
  REQUIRE(a);
  CHECK(a->fields[0] == std::pair<std::string, std::string>{"answer", "5"});
  auto b = script.lookup(CanonicalUrl::parse("http://M.onion/p/6/"));
  REQUIRE(b);
  REQUIRE(b->cookie);
  CHECK(b->cookie->domain == "m.onion");
  CHECK_FALSE(script.lookup(CanonicalUrl::parse("http://m.onion/p/7")));
  CHECK_THROWS_AS(CaptchaScript::parse("/p/5\n"), ConfigError);
  CHECK_THROWS_AS(CaptchaScript::parse("/p/5 =oops\n"), ConfigError);
  CHECK_THROWS_AS(CaptchaScript::load("/nonexistent/script.txt"), ConfigError);
}

TEST_CASE("console prompt turns typed lines into a submission") {
  auto reg = std::make_shared<ChallengeRegistry>();
  std::istringstream in("answer=5\ntoken=x\n\ncookie:session=q\n");
  std::ostringstream out;
  {
    ConsolePrompt prompt(reg, in, out, "m.onion");
    const auto a = reg->open(challenge_at(kPage));
    prompt.enqueue(*reg->find(a));
    auto got = reg->await_solution(a, Millis(5000));
    REQUIRE(got);
    CHECK(got->fields.size() == 2);

    const auto b = reg->open(challenge_at(kPage));
    prompt.enqueue(*reg->find(b));
    auto cookie = reg->await_solution(b, Millis(5000));
    REQUIRE(cookie);
    REQUIRE(cookie->cookie);
    CHECK(cookie->cookie->value == "q");
  }
  CHECK(out.str().find("http://m.onion/p/5") != std::string::npos);
}

TEST_CASE("console prompt abandons on end of input") {
  auto reg = std::make_shared<ChallengeRegistry>();
  std::istringstream in("");
  std::ostringstream out;
  ConsolePrompt prompt(reg, in, out, "m.onion");
  const auto a = reg->open(challenge_at(kPage));
  prompt.enqueue(*reg->find(a));
  CHECK_FALSE(reg->await_solution(a, Millis(5000)));
  CHECK(reg->find(a)->state == ChallengeState::kAbandoned);
}

}  // TEST_SUITE
