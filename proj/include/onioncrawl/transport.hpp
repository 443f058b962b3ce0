#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "onioncrawl/config.hpp"
#include "onioncrawl/random.hpp"
#include "onioncrawl/url.hpp"

namespace onioncrawl {

enum class StatusClass { kOk, kNotFound, kUnavailable, kOtherError };

// 200 -> Ok, 404 -> NotFound, 503 -> Unavailable, anything else OtherError.
StatusClass classify_status(int code);
std::string_view to_string(StatusClass c);

struct RedirectHop {
  int status = 0;
  CanonicalUrl location;
};

struct FetchResult {
  CanonicalUrl requested;
  CanonicalUrl final_url;
  // 0 when no final response was obtained (timeout, connection failure,
  // cross-host or excessive redirects).
  int final_status = 0;
  StatusClass status_class = StatusClass::kOtherError;
  std::string body;
  std::string content_type;
  std::vector<RedirectHop> redirect_chain;
  std::vector<CookieSpec> set_cookies;
  Millis elapsed{0};
  std::string user_agent_used;
  int attempt_count = 0;
  std::string error;

  bool ok() const { return status_class == StatusClass::kOk; }
  bool is_html() const;
};

// Random-per-request user agent choice from a fixed list, reproducible for a
// given seed.
class UserAgentRotator {
 public:
  UserAgentRotator(std::vector<std::string> agents, std::uint64_t seed);

  const std::string& next();
  const std::vector<std::string>& agents() const { return agents_; }

 private:
  std::vector<std::string> agents_;
  Rng rng_;
};

struct TransportSettings {
  std::optional<ProxyEndpoint> proxy;
  Millis request_timeout{30'000};
  int retries = 2;
  Millis backoff_base{250};
  int max_redirects = 5;

  static TransportSettings from(const CrawlConfig& cfg);
};

using FormFields = std::vector<std::pair<std::string, std::string>>;

struct HttpRequest {
  std::string method = "GET";
  CanonicalUrl url;
  std::string body;
  std::string content_type;
};

// Stateless HTTP(S) client. Every request carries exactly one User-Agent,
// "Accept: text/html" and, when cookies apply, one Cookie header. Redirects
// within the same host are followed; 503 responses and transport failures
// are retried with exponential backoff.
class Transport {
 public:
  explicit Transport(TransportSettings settings);

  // Throws ConfigError for an onion URL without a remote-DNS proxy.
  FetchResult fetch(const CanonicalUrl& url, std::span<const CookieSpec> cookies,
                    const std::string& user_agent) const;
  FetchResult fetch(const CanonicalUrl& url, std::span<const CookieSpec> cookies,
                    UserAgentRotator& rotator) const;
  FetchResult post_form(const CanonicalUrl& url, const FormFields& fields,
                        std::span<const CookieSpec> cookies,
                        const std::string& user_agent) const;
  FetchResult execute(const HttpRequest& request,
                      std::span<const CookieSpec> cookies,
                      const std::string& user_agent) const;

  const TransportSettings& settings() const { return settings_; }

 private:
  FetchResult attempt(const HttpRequest& request, const std::string& cookie_header,
                      const std::string& user_agent, bool& retryable) const;

  TransportSettings settings_;
};

// Cookies that apply to url, joined as "a=1; b=2" in the given order.
std::string build_cookie_header(std::span<const CookieSpec> cookies,
                                const CanonicalUrl& url);

// application/x-www-form-urlencoded, fields in the given order.
std::string form_urlencode(const FormFields& fields);

// Parses one Set-Cookie header value. Without a Domain attribute the cookie
// belongs to request_host.
std::optional<CookieSpec> parse_set_cookie(std::string_view header,
                                           const std::string& request_host);

// True when a redirect chain ended somewhere other than the requested page.
// Landing on login_path, or on a location containing one of the markers, is
// always unexpected.
bool detect_unexpected_redirect(const CanonicalUrl& requested,
                                std::span<const RedirectHop> chain,
                                std::string_view login_path,
                                std::span<const std::string> markers = {});

}  // namespace onioncrawl
