#include "onioncrawl/url.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace onioncrawl {
namespace {

struct Reference {
  std::optional<std::string> scheme;
  std::optional<std::string> authority;
  std::string path;
  std::optional<std::string> query;
};

bool is_unreserved(unsigned char c) {
  return std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~';
}

bool is_hex(unsigned char c) { return std::isxdigit(c) != 0; }

int hex_value(unsigned char c) {
  if (c >= '0' && c <= '9') return c - '0';
  return std::tolower(c) - 'a' + 10;
}

// Characters that may appear literally in a path or query.
bool is_literal_ok(unsigned char c) {
  if (c <= 0x20 || c >= 0x7f) return false;
  switch (c) {
    case '"': case '<': case '>': case '^': case '`':
    case '{': case '|': case '}':
      return false;
    default:
      return true;
  }
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

void append_escape(std::string& out, unsigned char c) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  out += '%';
  out += kHex[c >> 4];
  out += kHex[c & 0xf];
}

// Uppercases escapes, decodes escaped unreserved characters when
// decode_unreserved is set, and escapes characters that are not allowed
// literally.
std::string normalize_escapes(std::string_view in, bool decode_unreserved) {
  std::string out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto c = static_cast<unsigned char>(in[i]);
    if (c == '%') {
      if (i + 2 < in.size() &&
          is_hex(static_cast<unsigned char>(in[i + 1])) &&
          is_hex(static_cast<unsigned char>(in[i + 2]))) {
        const auto decoded = static_cast<unsigned char>(
            hex_value(static_cast<unsigned char>(in[i + 1])) * 16 +
            hex_value(static_cast<unsigned char>(in[i + 2])));
        if (decode_unreserved && is_unreserved(decoded)) {
          out += static_cast<char>(decoded);
        } else {
          append_escape(out, decoded);
        }
        i += 2;
      } else {
        append_escape(out, c);
      }
    } else if (is_literal_ok(c)) {
      out += static_cast<char>(c);
    } else {
      append_escape(out, c);
    }
  }
  return out;
}

// RFC 3986 section 5.2.4.
std::string remove_dot_segments(std::string_view path) {
  std::string input(path);
  std::string output;
  while (!input.empty()) {
    if (input.rfind("../", 0) == 0) {
      input.erase(0, 3);
    } else if (input.rfind("./", 0) == 0) {
      input.erase(0, 2);
    } else if (input.rfind("/./", 0) == 0) {
      input.replace(0, 3, "/");
    } else if (input == "/.") {
      input = "/";
    } else if (input.rfind("/../", 0) == 0 || input == "/..") {
      input = input.size() == 3 ? std::string("/") : input.substr(3);
      const auto cut = output.rfind('/');
      output.erase(cut == std::string::npos ? 0 : cut);
    } else if (input == "." || input == "..") {
      input.clear();
    } else {
      const auto next = input.find('/', input[0] == '/' ? 1 : 0);
      output += input.substr(0, next);
      input.erase(0, next == std::string::npos ? input.size() : next);
    }
  }
  return output;
}

std::string trim_and_strip_controls(std::string_view raw) {
  std::size_t b = 0;
  std::size_t e = raw.size();
  while (b < e && static_cast<unsigned char>(raw[b]) <= 0x20) ++b;
  while (e > b && static_cast<unsigned char>(raw[e - 1]) <= 0x20) --e;
  std::string out;
  out.reserve(e - b);
  for (std::size_t i = b; i < e; ++i) {
    const char c = raw[i];
    if (c == '\t' || c == '\n' || c == '\r') continue;
    out += c == '\\' ? '/' : c;
  }
  return out;
}

std::optional<Reference> split_reference(std::string_view s) {
  Reference ref;
  if (const auto hash = s.find('#'); hash != std::string_view::npos) {
    s = s.substr(0, hash);
  }

  const auto colon = s.find(':');
  const auto first_delim = s.find_first_of("/?");
  if (colon != std::string_view::npos &&
      (first_delim == std::string_view::npos || colon < first_delim)) {
    const auto scheme = s.substr(0, colon);
    if (scheme.empty() ||
        !std::isalpha(static_cast<unsigned char>(scheme.front()))) {
      return std::nullopt;
    }
    for (const char c : scheme) {
      const auto uc = static_cast<unsigned char>(c);
      if (!std::isalnum(uc) && c != '+' && c != '-' && c != '.') {
        return std::nullopt;
      }
    }
    ref.scheme = lower(std::string(scheme));
    s.remove_prefix(colon + 1);
  }

  if (s.rfind("//", 0) == 0) {
    s.remove_prefix(2);
    const auto end = s.find_first_of("/?");
    ref.authority = std::string(s.substr(0, end));
    s.remove_prefix(end == std::string_view::npos ? s.size() : end);
  }

  const auto q = s.find('?');
  ref.path = std::string(s.substr(0, q));
  if (q != std::string_view::npos) ref.query = std::string(s.substr(q + 1));
  return ref;
}

struct Authority {
  std::string host;
  std::optional<int> port;
};

std::optional<Authority> parse_authority(std::string_view a) {
  if (const auto at = a.rfind('@'); at != std::string_view::npos) {
    a.remove_prefix(at + 1);
  }
  Authority out;
  std::string_view host = a;
  std::string_view port;
  if (!a.empty() && a.front() == '[') {
    const auto close = a.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    host = a.substr(0, close + 1);
    const auto rest = a.substr(close + 1);
    if (!rest.empty()) {
      if (rest.front() != ':') return std::nullopt;
      port = rest.substr(1);
    }
  } else if (const auto colon = a.rfind(':'); colon != std::string_view::npos) {
    host = a.substr(0, colon);
    port = a.substr(colon + 1);
  }

  out.host = lower(std::string(host));
  while (!out.host.empty() && out.host.back() == '.') out.host.pop_back();
  if (out.host.empty()) return std::nullopt;
  if (out.host.front() != '[') {
    for (const char c : out.host) {
      const auto uc = static_cast<unsigned char>(c);
      if (!std::isalnum(uc) && c != '-' && c != '.' && c != '_') {
        return std::nullopt;
      }
    }
  }

  if (!port.empty()) {
    if (port.size() > 5) return std::nullopt;
    int value = 0;
    for (const char c : port) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
      value = value * 10 + (c - '0');
    }
    if (value == 0 || value > 65535) return std::nullopt;
    out.port = value;
  }
  return out;
}

int default_port(std::string_view scheme) { return scheme == "https" ? 443 : 80; }

CanonicalUrl finish(std::string scheme, Authority authority, std::string path,
                    std::optional<std::string> query,
                    bool keep_trailing_slash = false) {
  CanonicalUrl u;
  u.scheme = std::move(scheme);
  u.host = std::move(authority.host);
  if (authority.port && *authority.port != default_port(u.scheme)) {
    u.port = authority.port;
  }
  path = remove_dot_segments(normalize_escapes(path, true));
  while (!keep_trailing_slash && path.size() > 1 && path.back() == '/') {
    path.pop_back();
  }
  if (path.empty() || path.front() != '/') path.insert(path.begin(), '/');
  u.path = std::move(path);
  if (query && !query->empty()) u.query = normalize_escapes(*query, false);
  return u;
}

bool supported_scheme(const std::string& scheme) {
  return scheme == "http" || scheme == "https";
}

std::optional<CanonicalUrl> resolve(std::string_view raw,
                                    const CanonicalUrl* base,
                                    bool keep_slash = false) {
  const std::string cleaned = trim_and_strip_controls(raw);
  if (cleaned.empty() && base == nullptr) return std::nullopt;
  auto ref = split_reference(cleaned);
  if (!ref) return std::nullopt;

  if (ref->scheme) {
    if (!supported_scheme(*ref->scheme)) return std::nullopt;
    if (!ref->authority) return std::nullopt;
    auto authority = parse_authority(*ref->authority);
    if (!authority) return std::nullopt;
    return finish(*ref->scheme, std::move(*authority), ref->path, ref->query, keep_slash);
  }
  if (base == nullptr) return std::nullopt;

  if (ref->authority) {
    auto authority = parse_authority(*ref->authority);
    if (!authority) return std::nullopt;
    return finish(base->scheme, std::move(*authority), ref->path, ref->query, keep_slash);
  }

  Authority authority{base->host, base->port};
  if (ref->path.empty()) {
    return finish(base->scheme, std::move(authority), base->path,
                  ref->query ? ref->query : base->query, keep_slash);
  }
  if (ref->path.front() == '/') {
    return finish(base->scheme, std::move(authority), ref->path, ref->query, keep_slash);
  }
  const auto slash = base->path.rfind('/');
  std::string merged = base->path.substr(0, slash + 1) + ref->path;
  return finish(base->scheme, std::move(authority), std::move(merged),
                ref->query, keep_slash);
}

}  // namespace

std::string CanonicalUrl::origin() const {
  std::string out = scheme + "://" + host;
  if (port) out += ":" + std::to_string(*port);
  return out;
}

std::string CanonicalUrl::target() const {
  return query ? path + "?" + *query : path;
}

std::string CanonicalUrl::to_string() const { return origin() + target(); }

int CanonicalUrl::effective_port() const {
  return port ? *port : default_port(scheme);
}

bool CanonicalUrl::is_onion() const {
  constexpr std::string_view kSuffix = ".onion";
  return host.size() >= kSuffix.size() &&
         host.compare(host.size() - kSuffix.size(), kSuffix.size(), kSuffix) ==
             0;
}

CanonicalUrl CanonicalUrl::parse(std::string_view raw) {
  auto url = resolve(raw, nullptr);
  if (!url) {
    throw std::invalid_argument("not an absolute http(s) URL: " +
                                std::string(raw));
  }
  return *url;
}

std::optional<CanonicalUrl> normalize_url(std::string_view raw,
                                          const CanonicalUrl& base) {
  return resolve(raw, &base);
}

std::optional<CanonicalUrl> normalize_url(std::string_view raw) {
  return resolve(raw, nullptr);
}

std::optional<std::string> resolve_location(std::string_view raw,
                                            std::string_view base) {
  const auto base_url = resolve(base, nullptr, true);
  if (!base_url) return std::nullopt;
  const auto url = resolve(raw, &*base_url, true);
  if (!url) return std::nullopt;
  return url->to_string();
}

bool is_internal(const CanonicalUrl& url, const CanonicalUrl& scope) {
  return url.host == scope.host;
}

}  // namespace onioncrawl
