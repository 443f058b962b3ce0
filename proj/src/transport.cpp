#include "onioncrawl/transport.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <memory>
#include <mutex>
#include <thread>

#include <curl/curl.h>
#include <spdlog/spdlog.h>

#include "onioncrawl/errors.hpp"

namespace onioncrawl {
namespace {

using Clock = std::chrono::steady_clock;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

void ensure_curl_initialized() {
  static std::once_flag once;
  std::call_once(once, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
}

struct HopResponse {
  int status = 0;
  std::string body;
  std::string location;
  std::string content_type;
  std::vector<std::string> set_cookie_lines;
  std::string error;
};

size_t on_body(char* data, size_t size, size_t nmemb, void* user) {
  auto* out = static_cast<HopResponse*>(user);
  out->body.append(data, size * nmemb);
  return size * nmemb;
}

size_t on_header(char* data, size_t size, size_t nmemb, void* user) {
  auto* out = static_cast<HopResponse*>(user);
  const std::string_view line(data, size * nmemb);
  if (line.rfind("HTTP/", 0) == 0) {
    // A new response starts (e.g. after a proxy CONNECT).
    out->location.clear();
    out->content_type.clear();
    out->set_cookie_lines.clear();
    return size * nmemb;
  }
  const auto colon = line.find(':');
  if (colon == std::string_view::npos) return size * nmemb;
  const std::string name = lower(trim(line.substr(0, colon)));
  const std::string value(trim(line.substr(colon + 1)));
  if (name == "location") {
    out->location = value;
  } else if (name == "content-type") {
    out->content_type = value;
  } else if (name == "set-cookie") {
    out->set_cookie_lines.push_back(value);
  }
  return size * nmemb;
}

struct CurlDeleter {
  void operator()(CURL* c) const { curl_easy_cleanup(c); }
};
struct SlistDeleter {
  void operator()(curl_slist* s) const { curl_slist_free_all(s); }
};

HopResponse perform(const std::string& method, const std::string& url,
                    const HttpRequest& request, const std::string& cookie_header,
                    const std::string& user_agent,
                    const TransportSettings& settings) {
  ensure_curl_initialized();
  HopResponse response;
  std::unique_ptr<CURL, CurlDeleter> curl(curl_easy_init());
  if (!curl) {
    response.error = "curl_easy_init failed";
    return response;
  }

  curl_slist* raw_headers = nullptr;
  raw_headers = curl_slist_append(raw_headers, ("User-Agent: " + user_agent).c_str());
  raw_headers = curl_slist_append(raw_headers, "Accept: text/html");
  if (!cookie_header.empty()) {
    raw_headers = curl_slist_append(raw_headers, ("Cookie: " + cookie_header).c_str());
  }
  const bool is_post = method == "POST";
  if (is_post) {
    raw_headers = curl_slist_append(raw_headers, ("Content-Type: " + request.content_type).c_str());
    raw_headers = curl_slist_append(raw_headers, "Expect:");
  }
  std::unique_ptr<curl_slist, SlistDeleter> headers(raw_headers);

  CURL* h = curl.get();
  curl_easy_setopt(h, CURLOPT_URL, url.c_str());
  curl_easy_setopt(h, CURLOPT_HTTPHEADER, headers.get());
  curl_easy_setopt(h, CURLOPT_FOLLOWLOCATION, 0L);
  curl_easy_setopt(h, CURLOPT_NOSIGNAL, 1L);
  curl_easy_setopt(h, CURLOPT_TIMEOUT_MS,
                   static_cast<long>(settings.request_timeout.count()));
  curl_easy_setopt(h, CURLOPT_WRITEFUNCTION, on_body);
  curl_easy_setopt(h, CURLOPT_WRITEDATA, &response);
  curl_easy_setopt(h, CURLOPT_HEADERFUNCTION, on_header);
  curl_easy_setopt(h, CURLOPT_HEADERDATA, &response);
  // An explicit empty proxy also disables *_proxy environment variables.
  const std::string proxy = settings.proxy ? settings.proxy->to_string() : std::string();
  curl_easy_setopt(h, CURLOPT_PROXY, proxy.c_str());
  if (is_post) {
    curl_easy_setopt(h, CURLOPT_POST, 1L);
    curl_easy_setopt(h, CURLOPT_POSTFIELDS, request.body.c_str());
    curl_easy_setopt(h, CURLOPT_POSTFIELDSIZE, static_cast<long>(request.body.size()));
  } else if (method != "GET") {
    curl_easy_setopt(h, CURLOPT_CUSTOMREQUEST, method.c_str());
  }

  const CURLcode rc = curl_easy_perform(h);
  if (rc != CURLE_OK) {
    response.status = 0;
    response.error = curl_easy_strerror(rc);
    return response;
  }
  long status = 0;
  curl_easy_getinfo(h, CURLINFO_RESPONSE_CODE, &status);
  response.status = static_cast<int>(status);
  return response;
}

bool is_redirect(int status) {
  return status == 301 || status == 302 || status == 303 || status == 307 ||
         status == 308;
}

void require_routable(const CanonicalUrl& url, const TransportSettings& settings) {
  if (!url.is_onion()) return;
  if (!settings.proxy) {
    throw ConfigError("onion address " + url.host +
                      " needs a proxy (socks5h:// or http://)");
  }
  if (!settings.proxy->remote_dns()) {
    throw ConfigError("onion address " + url.host +
                      " cannot be resolved locally; use socks5h:// instead of socks5://");
  }
}

}  // namespace

StatusClass classify_status(int code) {
  switch (code) {
    case 200: return StatusClass::kOk;
    case 404: return StatusClass::kNotFound;
    case 503: return StatusClass::kUnavailable;
    default: return StatusClass::kOtherError;
  }
}

std::string_view to_string(StatusClass c) {
  switch (c) {
    case StatusClass::kOk: return "ok";
    case StatusClass::kNotFound: return "not_found";
    case StatusClass::kUnavailable: return "unavailable";
    case StatusClass::kOtherError: return "other_error";
  }
  return "other_error";
}

bool FetchResult::is_html() const {
  if (content_type.empty()) return true;
  const std::string ct = lower(content_type);
  return ct.find("text/html") != std::string::npos ||
         ct.find("application/xhtml") != std::string::npos;
}

UserAgentRotator::UserAgentRotator(std::vector<std::string> agents,
                                   std::uint64_t seed)
    : agents_(std::move(agents)), rng_(seed) {
  if (agents_.empty()) throw ConfigError("user agent list must be non-empty");
}

const std::string& UserAgentRotator::next() {
  return agents_[uniform_index(rng_, agents_.size())];
}

TransportSettings TransportSettings::from(const CrawlConfig& cfg) {
  TransportSettings s;
  s.proxy = cfg.proxy;
  s.request_timeout = cfg.request_timeout;
  s.retries = cfg.retries;
  s.backoff_base = cfg.backoff_base;
  return s;
}

Transport::Transport(TransportSettings settings) : settings_(std::move(settings)) {}

FetchResult Transport::fetch(const CanonicalUrl& url,
                             std::span<const CookieSpec> cookies,
                             const std::string& user_agent) const {
  HttpRequest request;
  request.url = url;
  return execute(request, cookies, user_agent);
}

FetchResult Transport::fetch(const CanonicalUrl& url,
                             std::span<const CookieSpec> cookies,
                             UserAgentRotator& rotator) const {
  return fetch(url, cookies, rotator.next());
}

FetchResult Transport::post_form(const CanonicalUrl& url, const FormFields& fields,
                                 std::span<const CookieSpec> cookies,
                                 const std::string& user_agent) const {
  HttpRequest request;
  request.method = "POST";
  request.url = url;
  request.body = form_urlencode(fields);
  request.content_type = "application/x-www-form-urlencoded";
  return execute(request, cookies, user_agent);
}

FetchResult Transport::execute(const HttpRequest& request,
                               std::span<const CookieSpec> cookies,
                               const std::string& user_agent) const {
  require_routable(request.url, settings_);
  const auto started = Clock::now();
  const std::string cookie_header = build_cookie_header(cookies, request.url);

  FetchResult result;
  for (int attempt = 0;; ++attempt) {
    bool retryable = false;
    result = this->attempt(request, cookie_header, user_agent, retryable);
    result.attempt_count = attempt + 1;
    if (!retryable || attempt >= settings_.retries) break;
    const auto delay = settings_.backoff_base * (1LL << attempt);
    spdlog::debug("retrying {} in {} ms (status {}, {})", request.url.to_string(),
                  delay.count(), result.final_status, result.error);
    std::this_thread::sleep_for(delay);
  }
  result.elapsed = std::chrono::duration_cast<Millis>(Clock::now() - started);
  return result;
}

FetchResult Transport::attempt(const HttpRequest& request,
                               const std::string& cookie_header,
                               const std::string& user_agent,
                               bool& retryable) const {
  FetchResult result;
  result.requested = request.url;
  result.final_url = request.url;
  result.user_agent_used = user_agent;

  std::string method = request.method;
  std::string current = request.url.to_string();
  for (int hop = 0;; ++hop) {
    HttpRequest hop_request = request;
    if (method == "GET") hop_request.body.clear();
    HopResponse response =
        perform(method, current, hop_request, cookie_header, user_agent, settings_);

    for (const auto& line : response.set_cookie_lines) {
      if (auto cookie = parse_set_cookie(line, result.final_url.host)) {
        result.set_cookies.push_back(std::move(*cookie));
      }
    }

    if (response.status == 0) {
      result.final_status = 0;
      result.error = response.error;
      retryable = true;
      break;
    }
    if (!is_redirect(response.status) || response.location.empty()) {
      if (response.status >= 300 && response.status < 400) {
        result.final_status = 0;
        result.error = "redirect status " + std::to_string(response.status) +
                       " without usable Location";
        break;
      }
      result.final_status = response.status;
      result.body = std::move(response.body);
      result.content_type = std::move(response.content_type);
      retryable = response.status == 503;
      break;
    }

    const auto next_raw = resolve_location(response.location, current);
    const auto next = next_raw ? normalize_url(*next_raw) : std::nullopt;
    if (!next) {
      result.final_status = 0;
      result.error = "unusable redirect location: " + response.location;
      break;
    }
    result.redirect_chain.push_back(RedirectHop{response.status, *next});
    if (next->host != result.final_url.host) {
      result.final_status = 0;
      result.error = "cross-host redirect to " + next->to_string();
      break;
    }
    if (hop + 1 >= settings_.max_redirects) {
      result.final_status = 0;
      result.error = "too many redirects";
      break;
    }
    result.final_url = *next;
    current = *next_raw;
    if (response.status == 301 || response.status == 302 || response.status == 303) {
      method = "GET";
    }
  }
  result.status_class = classify_status(result.final_status);
  return result;
}

std::string build_cookie_header(std::span<const CookieSpec> cookies,
                                const CanonicalUrl& url) {
  std::string out;
  for (const auto& c : cookies) {
    std::string domain = lower(c.domain);
    if (!domain.empty() && domain.front() == '.') domain.erase(0, 1);
    const bool host_match =
        url.host == domain ||
        (url.host.size() > domain.size() &&
         url.host.compare(url.host.size() - domain.size(), domain.size(), domain) == 0 &&
         url.host[url.host.size() - domain.size() - 1] == '.');
    if (!host_match) continue;
    const std::string& path = c.path.empty() ? std::string("/") : c.path;
    if (url.path.rfind(path, 0) != 0 && path != "/") continue;
    if (!out.empty()) out += "; ";
    out += c.name + "=" + c.value;
  }
  return out;
}

std::string form_urlencode(const FormFields& fields) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  auto encode = [](std::string_view s) {
    std::string out;
    for (const unsigned char c : s) {
      if (std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~' || c == '*') {
        out += static_cast<char>(c);
      } else if (c == ' ') {
        out += '+';
      } else {
        out += '%';
        out += kHex[c >> 4];
        out += kHex[c & 0xf];
      }
    }
    return out;
  };
  std::string body;
  for (const auto& [k, v] : fields) {
    if (!body.empty()) body += '&';
    body += encode(k) + "=" + encode(v);
  }
  return body;
}

std::optional<CookieSpec> parse_set_cookie(std::string_view header,
                                           const std::string& request_host) {
  const auto semi = header.find(';');
  const auto pair = trim(header.substr(0, semi));
  const auto eq = pair.find('=');
  if (eq == std::string_view::npos || eq == 0) return std::nullopt;

  CookieSpec cookie;
  cookie.name = std::string(trim(pair.substr(0, eq)));
  cookie.value = std::string(trim(pair.substr(eq + 1)));
  cookie.domain = request_host;
  cookie.path = "/";
  cookie.source = CookieSource::kLogin;

  std::string_view rest = semi == std::string_view::npos ? std::string_view{}
                                                         : header.substr(semi + 1);
  while (!rest.empty()) {
    const auto next = rest.find(';');
    const auto attr = trim(rest.substr(0, next));
    const auto aeq = attr.find('=');
    const std::string key = lower(trim(attr.substr(0, aeq)));
    const std::string value =
        aeq == std::string_view::npos ? std::string() : std::string(trim(attr.substr(aeq + 1)));
    if (key == "domain" && !value.empty()) {
      cookie.domain = lower(value.front() == '.' ? value.substr(1) : value);
    } else if (key == "path" && !value.empty()) {
      cookie.path = value;
    }
    if (next == std::string_view::npos) break;
    rest.remove_prefix(next + 1);
  }
  return cookie;
}

bool detect_unexpected_redirect(const CanonicalUrl& requested,
                                std::span<const RedirectHop> chain,
                                std::string_view login_path,
                                std::span<const std::string> markers) {
  if (chain.empty()) return false;
  const CanonicalUrl& landed = chain.back().location;

  if (!login_path.empty()) {
    const auto login = normalize_url(login_path, requested);
    if (login && login->path == landed.path) return true;
  }
  const std::string where = lower(landed.target());
  for (const auto& marker : markers) {
    if (!marker.empty() && where.find(lower(marker)) != std::string::npos) return true;
  }
  return landed.host != requested.host || landed.path != requested.path;
}

}  // namespace onioncrawl
