#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onioncrawl/config.hpp"
#include "onioncrawl/random.hpp"
#include "onioncrawl/transport.hpp"
#include "onioncrawl/url.hpp"

namespace onioncrawl {

// In-place Fisher-Yates: i from n-1 down to 1, swap with uniform j in [0, i].
template <typename T>
void fisher_yates(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i-- > 1;) {
    const std::size_t j = uniform_index(rng, i + 1);
    std::swap(items[i], items[j]);
  }
}

enum class CookieStatus { kUnknown, kValid, kInvalid };

// Pool of session cookies (manual and login-minted) visited in a shuffled
// order. Owned by the crawl loop; never shared between threads.
class CookieJar {
 public:
  explicit CookieJar(std::uint64_t seed);
  CookieJar(std::vector<CookieSpec> cookies, std::uint64_t seed);

  // New permutation of all cookies, cursor back to 0.
  void shuffle_rotation();

  // cookies[rotation_order[cursor]], or nullptr when exhausted.
  const CookieSpec* current() const;
  std::optional<std::size_t> current_index() const;

  // Moves to the next cookie not marked invalid. Returns false once the
  // order is exhausted.
  bool advance();

  // Appends a cookie. With make_current it is placed at the cursor so it is
  // used next; otherwise it joins the end of the current order.
  std::size_t add(CookieSpec cookie, bool make_current);

  void set_status(std::size_t index, CookieStatus status);
  CookieStatus status(std::size_t index) const { return status_.at(index); }

  bool empty() const { return cookies_.empty(); }
  std::size_t size() const { return cookies_.size(); }
  bool exhausted() const { return cursor_ >= order_.size(); }
  std::size_t usable_count() const;

  const std::vector<CookieSpec>& cookies() const { return cookies_; }
  const std::vector<std::size_t>& rotation_order() const { return order_; }
  std::size_t cursor() const { return cursor_; }

 private:
  void skip_invalid();

  std::vector<CookieSpec> cookies_;
  std::vector<CookieStatus> status_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

enum class CookieCheck { kValid, kInvalid, kTransient };
std::string_view to_string(CookieCheck c);

struct CookieCheckResult {
  CookieCheck verdict = CookieCheck::kTransient;
  FetchResult probe;
  std::string cause;
};

struct AuthContext {
  std::string login_path;  // empty when the market has no login form
  // Substrings of a redirect target that mean "sent to authenticate".
  std::vector<std::string> redirect_markers;
  std::string home_marker;
};

// Markers used when the metadata names no login path.
const std::vector<std::string>& default_login_markers();

AuthContext auth_context(const MarketMetadata& meta);

// Fetches probe carrying only this cookie. Unexpected redirects (or a
// missing home marker) condemn the cookie; 503s and transport failures are
// transient.
CookieCheckResult check_cookie(const Transport& transport, const CanonicalUrl& probe,
                               const CookieSpec& cookie, const AuthContext& auth,
                               const std::string& user_agent);

bool validate_cookie(const Transport& transport, const CanonicalUrl& probe,
                     const CookieSpec& cookie, const AuthContext& auth,
                     const std::string& user_agent);

enum class LoginOutcome { kOk, kFailed, kRejected, kCaptcha };
std::string_view to_string(LoginOutcome o);

struct LoginResult {
  LoginOutcome outcome = LoginOutcome::kFailed;
  std::optional<CookieSpec> cookie;  // source=login, set on kOk
  FetchResult response;              // the login POST
  FetchResult home;                  // follow-up GET of base (when reached)
  std::string detail;
};

// Form login against base+login_path. A transport failure or non-200 answer
// is kFailed; a 200 without a cookie, or a cookie that does not reveal the
// home marker, is kRejected (kCaptcha when the login page shows a captcha).
// Throws std::invalid_argument when meta has no credentials.
LoginResult login(const MarketMetadata& meta, const CanonicalUrl& base,
                  const Transport& transport, const std::string& user_agent);

struct StartingLink {
  CanonicalUrl url;
  FetchResult probe;  // the successful probe, reused as the root fetch
};

// Judges a probed link: an empty string accepts it, anything else is the
// diagnosis for rejecting it. May replace the probe (after logging in, for
// instance). Without one, a link is accepted when the probe is Ok and was
// not redirected elsewhere.
using AdmitFn = std::function<std::string(const CanonicalUrl&, FetchResult&)>;

// Probes meta.starting_links in order and returns the first accepted one.
// Throws StartingLinkError listing every diagnosis.
StartingLink select_starting_link(const MarketMetadata& meta, const Transport& transport,
                                  UserAgentRotator& rotator,
                                  std::span<const CookieSpec> cookies,
                                  const AdmitFn& admit = {});

}  // namespace onioncrawl
