#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "onioncrawl/clock.hpp"
#include "onioncrawl/config.hpp"
#include "onioncrawl/transport.hpp"
#include "onioncrawl/url.hpp"

namespace onioncrawl {

enum class ChallengeState { kPending, kSolved, kAbandoned };
std::string_view to_string(ChallengeState s);

struct CaptchaChallenge {
  std::string id;  // assigned by ChallengeRegistry::open
  CanonicalUrl url;
  int depth = 0;
  std::string matched_pattern;
  std::string page_excerpt;  // first 4096 bytes of the body
  std::vector<CanonicalUrl> image_refs;
  // Where a field-based answer is POSTed; the page itself when the form
  // declares no action.
  CanonicalUrl form_action;
  SystemClock::time_point created_at;
  ChallengeState state = ChallengeState::kPending;
};

struct ChallengeSolution {
  std::string challenge_id;
  FormFields fields;
  std::optional<CookieSpec> cookie;

  // Exactly one of fields / cookie is set.
  bool well_formed() const { return fields.empty() != !cookie.has_value(); }
};

inline constexpr std::size_t kExcerptBytes = 4096;

const std::vector<std::string>& default_captcha_hints();

// Pattern-based detection: a hint (case-insensitive substring; market hints
// first, then the built-in ones) anywhere in the body, markup included.
std::optional<CaptchaChallenge> detect_captcha(std::string_view body,
                                               const CanonicalUrl& url,
                                               std::span<const std::string> hints);

// Parses "a=1&b=2" or "cookie:name=value". Returns nullopt for empty or
// malformed text.
std::optional<ChallengeSolution> parse_solution_text(std::string_view text,
                                                     const std::string& cookie_domain);

enum class SubmitStatus { kAccepted, kUnknown, kConflict, kInvalid };

// Shared registry of challenges. Submissions may come from any thread (the
// control API, a prompt, a script); waiters block only their own thread.
class ChallengeRegistry {
 public:
  // Stores the challenge as pending and returns its id.
  std::string open(CaptchaChallenge challenge);

  // Unknown id -> kUnknown; already solved or abandoned -> kConflict and the
  // state is unchanged; malformed solution -> kInvalid.
  SubmitStatus submit(ChallengeSolution solution);

  // Blocks until a solution arrives or timeout elapses. On timeout the
  // challenge becomes abandoned and nullopt is returned.
  std::optional<ChallengeSolution> await_solution(const std::string& id,
                                                  Millis timeout);

  // pending -> abandoned; false if the challenge was not pending.
  bool abandon(const std::string& id);
  void abandon_all();

  std::optional<CaptchaChallenge> find(const std::string& id) const;
  std::vector<CaptchaChallenge> pending() const;
  std::vector<CaptchaChallenge> all() const;

 private:
  struct Slot {
    CaptchaChallenge challenge;
    std::optional<ChallengeSolution> solution;
  };

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Slot> slots_;
  std::vector<std::string> order_;
  std::size_t next_id_ = 1;
};

// Pre-recorded answers for unattended runs. Each non-comment line is
// "<url-or-path> <answer>" where answer is "field=value[&field=value...]"
// or "cookie:name=value".
class CaptchaScript {
 public:
  static CaptchaScript load(const std::filesystem::path& path);
  static CaptchaScript parse(std::string_view text);

  std::optional<ChallengeSolution> lookup(const CanonicalUrl& url) const;

 private:
  struct Entry {
    std::string key;  // absolute URL or a path
    std::string answer;
  };
  std::vector<Entry> entries_;
};

// Fallback intervention when no control API is served: prints each
// challenge and reads "field=value" lines (or one "cookie:name=value" line)
// terminated by an empty line. A reader blocked on input at shutdown is
// detached, hence the shared ownership of the registry.
class ConsolePrompt {
 public:
  ConsolePrompt(std::shared_ptr<ChallengeRegistry> registry, std::istream& in,
                std::ostream& out, std::string cookie_domain);
  ~ConsolePrompt();
  ConsolePrompt(const ConsolePrompt&) = delete;
  ConsolePrompt& operator=(const ConsolePrompt&) = delete;

  void enqueue(const CaptchaChallenge& challenge);

  struct State;

 private:
  std::shared_ptr<State> state_;
  std::thread worker_;
};

}  // namespace onioncrawl
