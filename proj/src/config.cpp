#include "onioncrawl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "onioncrawl/errors.hpp"

namespace onioncrawl {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError(std::string("cannot open ") + what + " file: " +
                      path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void warn_unknown(const ordered_json& obj, const std::set<std::string>& known,
                  const std::string& scope, std::vector<std::string>* warnings) {
  for (const auto& [key, value] : obj.items()) {
    if (known.contains(key)) continue;
    std::string msg = "ignoring unknown field '" + scope + key + "'";
    spdlog::warn("{}", msg);
    if (warnings) warnings->push_back(std::move(msg));
  }
}

std::string require_string(const ordered_json& obj, const std::string& key,
                           const std::string& scope) {
  if (!obj.contains(key)) throw ConfigError(scope + key + " is required");
  if (!obj.at(key).is_string()) throw ConfigError(scope + key + " must be a string");
  return obj.at(key).get<std::string>();
}

std::string optional_string(const ordered_json& obj, const std::string& key,
                            const std::string& scope, std::string fallback = {}) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  if (!obj.at(key).is_string()) throw ConfigError(scope + key + " must be a string");
  return obj.at(key).get<std::string>();
}

std::vector<std::string> string_array(const ordered_json& obj,
                                      const std::string& key) {
  std::vector<std::string> out;
  if (!obj.contains(key) || obj.at(key).is_null()) return out;
  if (!obj.at(key).is_array()) throw ConfigError(key + " must be an array of strings");
  for (const auto& item : obj.at(key)) {
    if (!item.is_string()) throw ConfigError(key + " must be an array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

Credentials parse_credentials(const ordered_json& c,
                              std::vector<std::string>* warnings) {
  if (!c.is_object()) throw ConfigError("credentials must be an object");
  static const std::set<std::string> kKnown = {
      "username", "password", "login_path", "username_field", "password_field",
      "extra_fields"};
  warn_unknown(c, kKnown, "credentials.", warnings);

  Credentials cred;
  cred.username = require_string(c, "username", "credentials.");
  cred.password = require_string(c, "password", "credentials.");
  cred.login_path = require_string(c, "login_path", "credentials.");
  cred.username_field = require_string(c, "username_field", "credentials.");
  cred.password_field = require_string(c, "password_field", "credentials.");
  if (cred.login_path.empty()) {
    throw ConfigError("credentials.login_path must be non-empty");
  }
  if (cred.username_field.empty()) {
    throw ConfigError("credentials.username_field must be non-empty");
  }
  if (cred.password_field.empty()) {
    throw ConfigError("credentials.password_field must be non-empty");
  }
  if (c.contains("extra_fields") && !c.at("extra_fields").is_null()) {
    const auto& extra = c.at("extra_fields");
    if (!extra.is_object()) throw ConfigError("credentials.extra_fields must be an object");
    for (const auto& [k, v] : extra.items()) {
      if (!v.is_string()) {
        throw ConfigError("credentials.extra_fields." + k + " must be a string");
      }
      cred.extra_fields.emplace_back(k, v.get<std::string>());
    }
  }
  return cred;
}

CookieSpec parse_cookie(const ordered_json& c, std::size_t index,
                        std::vector<std::string>* warnings) {
  const std::string scope = "cookies[" + std::to_string(index) + "].";
  if (!c.is_object()) throw ConfigError("cookies entries must be objects");
  static const std::set<std::string> kKnown = {"name", "value", "domain", "path"};
  warn_unknown(c, kKnown, scope, warnings);
  CookieSpec cookie;
  cookie.name = require_string(c, "name", scope);
  cookie.value = optional_string(c, "value", scope);
  cookie.domain = require_string(c, "domain", scope);
  cookie.path = optional_string(c, "path", scope, "/");
  cookie.source = CookieSource::kManual;
  if (cookie.name.empty()) throw ConfigError(scope + "name must be non-empty");
  if (cookie.domain.empty()) throw ConfigError(scope + "domain must be non-empty");
  return cookie;
}

std::optional<Millis> optional_duration(const nlohmann::json& j,
                                        const std::string& key, double scale) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_number()) throw ConfigError(key + " must be a number or null");
  const double v = j.at(key).get<double>();
  if (v < 0) throw ConfigError(key + " must be non-negative");
  return Millis(static_cast<std::int64_t>(v * scale));
}

}  // namespace

MarketMetadata parse_market_metadata(std::string_view text,
                                     std::vector<std::string>* warnings) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("market metadata parse error: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("market metadata must be a JSON object");

  static const std::set<std::string> kKnown = {
      "market_name", "starting_links", "credentials",
      "cookies",     "captcha_hints",  "expected_home_marker"};
  warn_unknown(doc, kKnown, "", warnings);

  MarketMetadata meta;
  meta.market_name = optional_string(doc, "market_name", "");
  meta.starting_links = string_array(doc, "starting_links");
  if (meta.starting_links.empty()) {
    throw ConfigError("starting_links must be non-empty");
  }
  if (doc.contains("credentials") && !doc.at("credentials").is_null()) {
    meta.credentials = parse_credentials(doc.at("credentials"), warnings);
  }
  if (doc.contains("cookies") && !doc.at("cookies").is_null()) {
    if (!doc.at("cookies").is_array()) throw ConfigError("cookies must be an array");
    std::size_t i = 0;
    for (const auto& c : doc.at("cookies")) {
      meta.cookies.push_back(parse_cookie(c, i++, warnings));
    }
  }
  meta.captcha_hints = string_array(doc, "captcha_hints");
  meta.expected_home_marker = optional_string(doc, "expected_home_marker", "");
  return meta;
}

MarketMetadata load_market_metadata(const std::filesystem::path& path,
                                    std::vector<std::string>* warnings) {
  return parse_market_metadata(read_file(path, "market metadata"), warnings);
}

std::string serialize_market_metadata(const MarketMetadata& meta) {
  ordered_json doc;
  doc["market_name"] = meta.market_name;
  doc["starting_links"] = meta.starting_links;
  if (meta.credentials) {
    const auto& c = *meta.credentials;
    ordered_json cred;
    cred["username"] = c.username;
    cred["password"] = c.password;
    cred["login_path"] = c.login_path;
    cred["username_field"] = c.username_field;
    cred["password_field"] = c.password_field;
    ordered_json extra = ordered_json::object();
    for (const auto& [k, v] : c.extra_fields) extra[k] = v;
    cred["extra_fields"] = extra;
    doc["credentials"] = cred;
  }
  ordered_json cookies = ordered_json::array();
  for (const auto& c : meta.cookies) {
    cookies.push_back(
        {{"name", c.name}, {"value", c.value}, {"domain", c.domain}, {"path", c.path}});
  }
  doc["cookies"] = cookies;
  doc["captcha_hints"] = meta.captcha_hints;
  doc["expected_home_marker"] = meta.expected_home_marker;
  return doc.dump(2);
}

std::string ProxyEndpoint::to_string() const {
  const char* scheme = kind == ProxyKind::kSocks5h  ? "socks5h"
                       : kind == ProxyKind::kSocks5 ? "socks5"
                                                    : "http";
  return std::string(scheme) + "://" + host + ":" + std::to_string(port);
}

ProxyEndpoint parse_proxy(std::string_view text) {
  ProxyEndpoint proxy;
  const auto sep = text.find("://");
  if (sep == std::string_view::npos) {
    throw ConfigError("proxy must look like socks5h://host:port or http://host:port");
  }
  const auto scheme = text.substr(0, sep);
  if (scheme == "socks5h") {
    proxy.kind = ProxyKind::kSocks5h;
  } else if (scheme == "socks5") {
    proxy.kind = ProxyKind::kSocks5;
  } else if (scheme == "http") {
    proxy.kind = ProxyKind::kHttp;
  } else {
    throw ConfigError("unsupported proxy scheme: " + std::string(scheme));
  }
  auto rest = text.substr(sep + 3);
  if (!rest.empty() && rest.back() == '/') rest.remove_suffix(1);
  const auto colon = rest.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == rest.size()) {
    throw ConfigError("proxy must include host and port: " + std::string(text));
  }
  proxy.host = std::string(rest.substr(0, colon));
  int port = 0;
  for (const char c : rest.substr(colon + 1)) {
    if (c < '0' || c > '9' || port > 65535) {
      throw ConfigError("invalid proxy port: " + std::string(text));
    }
    port = port * 10 + (c - '0');
  }
  if (port <= 0 || port > 65535) throw ConfigError("invalid proxy port: " + std::string(text));
  proxy.port = port;
  return proxy;
}

CaptchaPolicy parse_captcha_policy(std::string_view text) {
  CaptchaPolicy policy;
  if (text == "interactive") {
    policy.kind = CaptchaPolicy::Kind::kInteractive;
  } else if (text == "abandon") {
    policy.kind = CaptchaPolicy::Kind::kAbandon;
  } else if (text == "fail") {
    policy.kind = CaptchaPolicy::Kind::kFail;
  } else if (text.rfind("script:", 0) == 0 && text.size() > 7) {
    policy.kind = CaptchaPolicy::Kind::kScript;
    policy.script_file = std::string(text.substr(7));
  } else {
    throw ConfigError("captcha policy must be interactive, abandon, fail or script:<file>");
  }
  return policy;
}

std::string to_string(const CaptchaPolicy& policy) {
  switch (policy.kind) {
    case CaptchaPolicy::Kind::kInteractive: return "interactive";
    case CaptchaPolicy::Kind::kAbandon: return "abandon";
    case CaptchaPolicy::Kind::kFail: return "fail";
    case CaptchaPolicy::Kind::kScript: return "script:" + policy.script_file.string();
  }
  return "interactive";
}

const std::vector<std::string>& default_user_agents() {
  static const std::vector<std::string> kAgents = {
      "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/124.0.0.0 Safari/537.36",
      "Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:125.0) Gecko/20100101 Firefox/125.0",
      "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/17.4 Safari/605.1.15",
      "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/124.0.0.0 Safari/537.36",
      "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/124.0.0.0 Safari/537.36",
      "Mozilla/5.0 (X11; Linux x86_64; rv:125.0) Gecko/20100101 Firefox/125.0",
      "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/124.0.0.0 Safari/537.36 Edg/124.0.2478.51",
      "Mozilla/5.0 (Macintosh; Intel Mac OS X 14.4; rv:125.0) Gecko/20100101 Firefox/125.0",
      "Mozilla/5.0 (Windows NT 10.0; rv:115.0) Gecko/20100101 Firefox/115.0",
      "Mozilla/5.0 (X11; Ubuntu; Linux x86_64; rv:124.0) Gecko/20100101 Firefox/124.0",
  };
  return kAgents;
}

CrawlConfig parse_crawl_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  static const std::set<std::string> kKnown = {
      "max_depth", "max_links", "time_limit_s", "targets", "proxy",
      "user_agents", "request_timeout_ms", "retries", "politeness_delay_ms",
      "backoff_base_ms", "rng_seed", "output_dir", "workers", "rotation_period",
      "captcha_policy", "captcha_timeout_s", "api_port"};
  for (const auto& [key, value] : j.items()) {
    if (!kKnown.contains(key)) spdlog::warn("ignoring unknown config field '{}'", key);
  }

  CrawlConfig cfg;
  try {
    if (j.contains("max_depth") && !j["max_depth"].is_null()) {
      cfg.max_depth = j["max_depth"].get<int>();
    }
    if (j.contains("max_links") && !j["max_links"].is_null()) {
      const auto v = j["max_links"].get<std::int64_t>();
      if (v < 0) throw ConfigError("max_links must be positive");
      cfg.max_links = static_cast<std::size_t>(v);
    }
    cfg.time_limit = optional_duration(j, "time_limit_s", 1000.0);
    if (j.contains("targets") && !j["targets"].is_null()) {
      std::vector<CanonicalUrl> targets;
      for (const auto& t : j["targets"]) {
        auto url = normalize_url(t.get<std::string>());
        if (!url) throw ConfigError("invalid target URL: " + t.get<std::string>());
        targets.push_back(*url);
      }
      cfg.target_links = std::move(targets);
    }
    if (j.contains("proxy") && !j["proxy"].is_null()) {
      cfg.proxy = parse_proxy(j["proxy"].get<std::string>());
    }
    if (j.contains("user_agents")) {
      cfg.user_agents = j["user_agents"].get<std::vector<std::string>>();
    }
    if (auto d = optional_duration(j, "request_timeout_ms", 1.0)) cfg.request_timeout = *d;
    if (j.contains("retries")) cfg.retries = j["retries"].get<int>();
    if (auto d = optional_duration(j, "politeness_delay_ms", 1.0)) cfg.politeness_delay = *d;
    if (auto d = optional_duration(j, "backoff_base_ms", 1.0)) cfg.backoff_base = *d;
    if (j.contains("rng_seed")) cfg.rng_seed = j["rng_seed"].get<std::uint64_t>();
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("workers")) cfg.workers = j["workers"].get<int>();
    if (j.contains("rotation_period")) cfg.rotation_period = j["rotation_period"].get<int>();
    if (j.contains("captcha_policy")) {
      cfg.captcha_policy = parse_captcha_policy(j["captcha_policy"].get<std::string>());
    }
    if (auto d = optional_duration(j, "captcha_timeout_s", 1000.0)) cfg.captcha_timeout = *d;
    if (j.contains("api_port") && !j["api_port"].is_null()) {
      cfg.api_port = j["api_port"].get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  return cfg;
}

CrawlConfig load_crawl_config(const std::filesystem::path& path) {
  return parse_crawl_config(read_file(path, "config"));
}

std::vector<CanonicalUrl> load_targets_file(const std::filesystem::path& path) {
  std::istringstream in(read_file(path, "targets"));
  std::vector<CanonicalUrl> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    const auto raw = line.substr(b, e - b + 1);
    auto url = normalize_url(raw);
    if (!url) throw ConfigError("invalid target URL: " + raw);
    out.push_back(*url);
  }
  return out;
}

ValidatedConfig validate_config(CrawlConfig cfg) {
  if (cfg.workers < 1) throw ConfigError("workers ≥ 1 required");
  if (cfg.max_depth && *cfg.max_depth < 0) {
    throw ConfigError("max_depth must be non-negative");
  }
  if (cfg.max_links && *cfg.max_links == 0) {
    throw ConfigError("max_links must be positive");
  }
  if (cfg.target_links && cfg.target_links->empty()) {
    throw ConfigError("target_links must be non-empty when set");
  }
  if (!cfg.max_depth && !cfg.max_links && !cfg.time_limit && !cfg.target_links) {
    throw ConfigError(
        "non-terminating configuration: set max_depth, max_links, time_limit "
        "or target_links");
  }
  if (cfg.retries < 0) throw ConfigError("retries must be non-negative");
  if (cfg.request_timeout <= Millis::zero()) {
    throw ConfigError("request_timeout must be positive");
  }
  if (cfg.politeness_delay < Millis::zero() || cfg.backoff_base < Millis::zero() ||
      cfg.captcha_timeout < Millis::zero()) {
    throw ConfigError("delays must be non-negative");
  }
  if (cfg.rotation_period < 1) throw ConfigError("rotation_period must be ≥ 1");
  if (cfg.api_port && (*cfg.api_port < 0 || *cfg.api_port > 65535)) {
    throw ConfigError("api_port out of range");
  }
  if (cfg.user_agents.empty()) cfg.user_agents = default_user_agents();
  for (const auto& ua : cfg.user_agents) {
    if (ua.empty()) throw ConfigError("user_agents must not contain empty strings");
  }
  if (cfg.output_dir.empty()) cfg.output_dir = "crawl-output";
  return ValidatedConfig(std::move(cfg));
}

}  // namespace onioncrawl
