#include "onioncrawl/session.hpp"

#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "onioncrawl/captcha.hpp"
#include "onioncrawl/errors.hpp"

namespace onioncrawl {

CookieJar::CookieJar(std::uint64_t seed) : rng_(seed) {}

CookieJar::CookieJar(std::vector<CookieSpec> cookies, std::uint64_t seed)
    : cookies_(std::move(cookies)), status_(cookies_.size(), CookieStatus::kUnknown),
      rng_(seed) {
  shuffle_rotation();
}

void CookieJar::shuffle_rotation() {
  order_.resize(cookies_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  fisher_yates(std::span<std::size_t>(order_), rng_);
  cursor_ = 0;
  skip_invalid();
}

void CookieJar::skip_invalid() {
  while (cursor_ < order_.size() && status_[order_[cursor_]] == CookieStatus::kInvalid) {
    ++cursor_;
  }
}

const CookieSpec* CookieJar::current() const {
  if (exhausted()) return nullptr;
  return &cookies_[order_[cursor_]];
}

std::optional<std::size_t> CookieJar::current_index() const {
  if (exhausted()) return std::nullopt;
  return order_[cursor_];
}

bool CookieJar::advance() {
  if (exhausted()) return false;
  ++cursor_;
  skip_invalid();
  return !exhausted();
}

std::size_t CookieJar::add(CookieSpec cookie, bool make_current) {
  const std::size_t index = cookies_.size();
  cookies_.push_back(std::move(cookie));
  status_.push_back(CookieStatus::kUnknown);
  if (make_current) {
    order_.insert(order_.begin() + static_cast<std::ptrdiff_t>(cursor_), index);
  } else {
    order_.push_back(index);
  }
  return index;
}

void CookieJar::set_status(std::size_t index, CookieStatus status) {
  status_.at(index) = status;
}

std::size_t CookieJar::usable_count() const {
  std::size_t n = 0;
  for (auto s : status_) n += s != CookieStatus::kInvalid;
  return n;
}

std::string_view to_string(CookieCheck c) {
  switch (c) {
    case CookieCheck::kValid: return "valid";
    case CookieCheck::kInvalid: return "invalid";
    case CookieCheck::kTransient: return "transient";
  }
  return "transient";
}

const std::vector<std::string>& default_login_markers() {
  static const std::vector<std::string> markers = {"login", "signin", "sign-in", "sign_in",
                                                   "logon"};
  return markers;
}

AuthContext auth_context(const MarketMetadata& meta) {
  AuthContext auth;
  if (meta.credentials) auth.login_path = meta.credentials->login_path;
  auth.redirect_markers = meta.captcha_hints;
  if (auth.login_path.empty()) {
    const auto& defaults = default_login_markers();
    auth.redirect_markers.insert(auth.redirect_markers.end(), defaults.begin(), defaults.end());
  }
  auth.home_marker = meta.expected_home_marker;
  return auth;
}

CookieCheckResult check_cookie(const Transport& transport, const CanonicalUrl& probe,
                               const CookieSpec& cookie, const AuthContext& auth,
                               const std::string& user_agent) {
  CookieCheckResult r;
  const CookieSpec one[] = {cookie};
  r.probe = transport.fetch(probe, one, user_agent);
  const auto& res = r.probe;
  if (detect_unexpected_redirect(probe, res.redirect_chain, auth.login_path,
                                 auth.redirect_markers)) {
    r.verdict = CookieCheck::kInvalid;
    r.cause = "unexpected redirect to " + res.final_url.to_string();
  } else if (res.final_status == 0 || res.status_class == StatusClass::kUnavailable) {
    r.verdict = CookieCheck::kTransient;
    r.cause = res.error.empty() ? "status " + std::to_string(res.final_status) : res.error;
  } else if (!res.ok()) {
    // Not the cookie's fault; keep it.
    r.verdict = CookieCheck::kTransient;
    r.cause = "status " + std::to_string(res.final_status);
  } else if (!auth.home_marker.empty() &&
             res.body.find(auth.home_marker) == std::string::npos) {
    r.verdict = CookieCheck::kInvalid;
    r.cause = "home marker absent";
  } else {
    r.verdict = CookieCheck::kValid;
  }
  if (r.verdict != CookieCheck::kValid) {
    spdlog::info("cookie {} on {}: {} ({})", cookie.name, probe.to_string(),
                 to_string(r.verdict), r.cause);
  }
  return r;
}

bool validate_cookie(const Transport& transport, const CanonicalUrl& probe,
                     const CookieSpec& cookie, const AuthContext& auth,
                     const std::string& user_agent) {
  return check_cookie(transport, probe, cookie, auth, user_agent).verdict ==
         CookieCheck::kValid;
}

std::string_view to_string(LoginOutcome o) {
  switch (o) {
    case LoginOutcome::kOk: return "login-ok";
    case LoginOutcome::kFailed: return "login-failed";
    case LoginOutcome::kRejected: return "login-rejected";
    case LoginOutcome::kCaptcha: return "login-captcha";
  }
  return "login-failed";
}

LoginResult login(const MarketMetadata& meta, const CanonicalUrl& base,
                  const Transport& transport, const std::string& user_agent) {
  if (!meta.credentials) throw std::invalid_argument("no credentials configured");
  const Credentials& cred = *meta.credentials;
  LoginResult r;

  const auto target = normalize_url(cred.login_path, base);
  if (!target || target->origin() != base.origin()) {
    r.outcome = LoginOutcome::kFailed;
    r.detail = "login path " + cred.login_path + " is not on " + base.origin();
    return r;
  }

  FormFields fields;
  fields.emplace_back(cred.username_field, cred.username);
  fields.emplace_back(cred.password_field, cred.password);
  for (const auto& kv : cred.extra_fields) fields.push_back(kv);

  r.response = transport.post_form(*target, fields, {}, user_agent);
  const auto& res = r.response;
  if (res.final_status != 200) {
    r.outcome = LoginOutcome::kFailed;
    r.detail = res.final_status == 0
                   ? "login request failed: " + res.error
                   : "login request returned status " + std::to_string(res.final_status);
    return r;
  }

  const CookieSpec* minted = nullptr;
  for (const auto& c : res.set_cookies) {
    if (!build_cookie_header(std::span(&c, 1), base).empty()) {
      minted = &c;
      break;
    }
  }
  if (!minted) {
    if (detect_captcha(res.body, res.final_url, meta.captcha_hints)) {
      r.outcome = LoginOutcome::kCaptcha;
      r.detail = "login page shows a captcha";
    } else {
      r.outcome = LoginOutcome::kRejected;
      r.detail = "login response set no session cookie";
    }
    return r;
  }

  CookieSpec cookie = *minted;
  cookie.source = CookieSource::kLogin;
  const CookieSpec one[] = {cookie};
  r.home = transport.fetch(base, one, user_agent);
  const bool redirected = detect_unexpected_redirect(
      base, r.home.redirect_chain, cred.login_path, meta.captcha_hints);
  const bool marker_ok = meta.expected_home_marker.empty() ||
                         r.home.body.find(meta.expected_home_marker) != std::string::npos;
  if (!redirected && r.home.ok() && marker_ok) {
    r.outcome = LoginOutcome::kOk;
    r.cookie = std::move(cookie);
    return r;
  }
  if (!redirected && r.home.final_status == 0) {
    r.outcome = LoginOutcome::kFailed;
    r.detail = "home fetch after login failed: " + r.home.error;
  } else if (detect_captcha(r.home.body, r.home.final_url, meta.captcha_hints)) {
    r.outcome = LoginOutcome::kCaptcha;
    r.detail = "captcha wall after login";
  } else {
    r.outcome = LoginOutcome::kRejected;
    r.detail = redirected ? "session cookie redirected back to " + r.home.final_url.to_string()
                          : "home marker absent after login";
  }
  return r;
}

StartingLink select_starting_link(const MarketMetadata& meta, const Transport& transport,
                                  UserAgentRotator& rotator,
                                  std::span<const CookieSpec> cookies,
                                  const AdmitFn& admit) {
  const auto login_path = meta.credentials ? meta.credentials->login_path : std::string();
  std::vector<std::string> diagnoses;
  for (const auto& raw : meta.starting_links) {
    const auto url = normalize_url(raw);
    if (!url) {
      diagnoses.push_back(raw + ": not a valid http(s) URL");
      continue;
    }
    FetchResult probe = transport.fetch(*url, cookies, rotator);
    std::string diagnosis;
    if (admit) {
      diagnosis = admit(*url, probe);
    } else if (!probe.ok()) {
      diagnosis = "status " + std::to_string(probe.final_status) +
                  (probe.error.empty() ? "" : " (" + probe.error + ")");
    } else if (detect_unexpected_redirect(*url, probe.redirect_chain, login_path,
                                          meta.captcha_hints)) {
      diagnosis = "redirected to " + probe.final_url.to_string();
    }
    if (diagnosis.empty()) return StartingLink{*url, std::move(probe)};
    spdlog::warn("starting link {} rejected: {}", url->to_string(), diagnosis);
    diagnoses.push_back(url->to_string() + ": " + diagnosis);
  }
  std::string msg = "no valid starting link";
  for (const auto& d : diagnoses) msg += "\n  " + d;
  throw StartingLinkError(msg);
}

}  // namespace onioncrawl
