#include "mockmarket/mockmarket.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <random>
#include <stdexcept>

#include <httplib.h>

namespace mockmarket {
namespace {

using Rng = std::mt19937_64;

std::size_t draw(Rng& rng, std::size_t n) {
  // Rejection sampling; std distributions differ across standard libraries.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

// The same target is written in several equivalent ways so that link
// canonicalization is exercised.
std::string href_for(int from, int slot, int to) {
  switch ((from * 31 + slot * 7) % 4) {
    case 0: return "/p/" + std::to_string(to);
    case 1: return "/p/" + std::to_string(to) + "/";
    case 2: return "/p/" + std::to_string(to) + "#reviews";
    default: return "../p/" + std::to_string(to);
  }
}

std::string render_page(int id, const std::vector<int>& links) {
  std::string html = "<!DOCTYPE html>\n<html><head><title>Listing " + std::to_string(id) +
                     "</title></head>\n<body>\n<h1>Listing " + std::to_string(id) + "</h1>\n";
  if (id == 0) html += std::string("<p class=\"marker\">") + kHomeMarker + "</p>\n";
  html += "<p>Vendor offer number " + std::to_string(id) + ". Escrow accepted.</p>\n<ul>\n";
  for (std::size_t slot = 0; slot < links.size(); ++slot) {
    html += "  <li><A HREF=\"" + href_for(id, static_cast<int>(slot), links[slot]) +
            "\">Listing " + std::to_string(links[slot]) + "</a></li>\n";
  }
  html += "</ul>\n";
  if (id % 5 == 0) {
    html += "<a href=\"http://external-" + std::to_string(id) +
            ".onion/\">partner</a>\n<a href=\"mailto:vendor" + std::to_string(id) +
            "@example.invalid\">contact</a>\n";
  }
  html += "</body></html>\n";
  return html;
}

const char* kLoginForm =
    "<!DOCTYPE html>\n<html><head><title>Sign in</title></head><body>\n"
    "<h1>Sign in</h1>\n%MSG%"
    "<form method=\"post\" action=\"/login\">\n"
    "<input name=\"username\"><input name=\"password\" type=\"password\">\n"
    "<button type=\"submit\">Enter</button>\n</form>\n</body></html>\n";

std::string login_page(const std::string& message) {
  std::string html = kLoginForm;
  const auto at = html.find("%MSG%");
  html.replace(at, 5, message.empty() ? "" : "<p class=\"error\">" + message + "</p>\n");
  return html;
}

std::string captcha_wall(int id) {
  return "<!DOCTYPE html>\n<html><head><title>Security check</title></head><body>\n"
         "<h1>Security check</h1>\n<p>Type the characters shown below.</p>\n"
         "<img src=\"/captcha.png\" alt=\"challenge\">\n"
         "<form method=\"post\" action=\"/p/" +
         std::to_string(id) +
         "/solve\">\n<input name=\"answer\">\n<button type=\"submit\">Verify</button>\n"
         "</form>\n</body></html>\n";
}

std::string url_decode(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size()) {
      out += static_cast<char>(std::stoi(s.substr(i + 1, 2), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::map<std::string, std::string> parse_form(const std::string& body) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    auto amp = body.find('&', pos);
    if (amp == std::string::npos) amp = body.size();
    const auto pair = body.substr(pos, amp - pos);
    pos = amp + 1;
    const auto eq = pair.find('=');
    if (eq == std::string::npos) continue;
    out.emplace(url_decode(pair.substr(0, eq)), url_decode(pair.substr(eq + 1)));
  }
  return out;
}

std::string session_from(const std::string& cookie_header) {
  std::size_t pos = 0;
  while (pos < cookie_header.size()) {
    auto semi = cookie_header.find(';', pos);
    if (semi == std::string::npos) semi = cookie_header.size();
    auto part = cookie_header.substr(pos, semi - pos);
    pos = semi + 1;
    while (!part.empty() && part.front() == ' ') part.erase(0, 1);
    if (part.rfind("session=", 0) == 0) return part.substr(8);
  }
  return {};
}

// Origin-form path of a request target; absolute-form targets arrive when
// the server is used as an HTTP proxy.
std::string origin_path(const std::string& target) {
  std::string t = target;
  if (auto scheme = t.find("://"); scheme != std::string::npos && t.front() != '/') {
    const auto slash = t.find('/', scheme + 3);
    t = slash == std::string::npos ? "/" : t.substr(slash);
  }
  if (auto q = t.find_first_of("?#"); q != std::string::npos) t.resize(q);
  return t;
}

bool iequals(const std::string& a, const std::string& b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
           return std::tolower(x) == std::tolower(y);
         });
}

std::optional<int> parse_id(const std::string& s) {
  if (s.empty() || s.size() > 9) return std::nullopt;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  return std::stoi(s);
}

}  // namespace

SiteSpec parse_site_spec(const nlohmann::json& j) {
  SiteSpec s;
  try {
    s.page_count = j.value("page_count", 1);
    s.branching = j.value("branching", 3);
    s.seed = j.value("seed", std::uint64_t{1});
    s.login_required = j.value("login_required", false);
    for (int p : j.value("captcha_pages", std::vector<int>{})) s.captcha_pages.insert(p);
    if (j.contains("cookie_ttl_requests") && !j["cookie_ttl_requests"].is_null()) {
      s.cookie_ttl_requests = j["cookie_ttl_requests"].get<int>();
    }
    s.username = j.value("username", s.username);
    s.password = j.value("password", s.password);
    s.response_delay = std::chrono::milliseconds(j.value("response_delay_ms", 0));
    for (const auto& f : j.value("fault_plan", nlohmann::json::array())) {
      FaultRule r;
      r.page = f.at("page").get<int>();
      const auto kind = f.at("kind").get<std::string>();
      if (kind == "always404") {
        r.kind = FaultRule::Kind::kAlways404;
      } else if (kind == "n_times_503") {
        r.kind = FaultRule::Kind::kNTimes503;
        r.n = f.at("n").get<int>();
      } else if (kind == "redirect_to_login") {
        r.kind = FaultRule::Kind::kRedirectToLogin;
      } else if (kind == "mirror_of") {
        r.kind = FaultRule::Kind::kMirrorOf;
        r.of = f.at("of").get<int>();
      } else {
        throw std::invalid_argument("unknown fault kind " + kind);
      }
      s.fault_plan.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad site spec: ") + e.what());
  }
  if (s.page_count < 1) throw std::invalid_argument("page_count must be >= 1");
  if (s.branching < 1) throw std::invalid_argument("branching must be >= 1");
  return s;
}

SiteGraph generate_site(const SiteSpec& spec) {
  const int n = spec.page_count;
  Rng rng(spec.seed);
  std::vector<std::vector<int>> links(n);

  // Random recursive tree with out-degree capped at branching keeps every
  // page reachable from 0; the remaining slots get random targets.
  std::vector<int> open = {0};
  for (int i = 1; i < n; ++i) {
    const auto k = draw(rng, open.size());
    const int parent = open[k];
    links[parent].push_back(i);
    if (static_cast<int>(links[parent].size()) >= spec.branching) {
      open.erase(open.begin() + static_cast<std::ptrdiff_t>(k));
    }
    open.push_back(i);
  }
  const int degree = std::min(spec.branching, n - 1);
  for (int p = 0; p < n; ++p) {
    auto& out = links[p];
    while (static_cast<int>(out.size()) < degree) {
      const int t = static_cast<int>(draw(rng, static_cast<std::size_t>(n)));
      if (t != p && std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    for (std::size_t i = out.size(); i-- > 1;) std::swap(out[i], out[draw(rng, i + 1)]);
  }

  SiteGraph g;
  g.links = links;
  g.bodies.resize(n);
  for (int p = 0; p < n; ++p) g.bodies[p] = render_page(p, links[p]);
  for (const auto& f : spec.fault_plan) {
    if (f.page < 0 || f.page >= n) continue;
    switch (f.kind) {
      case FaultRule::Kind::kAlways404:
      case FaultRule::Kind::kRedirectToLogin:
        g.dead.insert(f.page);
        break;
      case FaultRule::Kind::kMirrorOf:
        if (f.of >= 0 && f.of < n) {
          g.links[f.page] = links[f.of];
          g.bodies[f.page] = render_page(f.of, links[f.of]);
        }
        break;
      case FaultRule::Kind::kNTimes503:
        break;
    }
  }
  return g;
}

std::set<int> oracle_reachable(const SiteGraph& site, int depth,
                               const std::set<int>& not_expanded) {
  std::set<int> seen = {0};
  std::deque<std::pair<int, int>> queue = {{0, 0}};
  while (!queue.empty()) {
    const auto [page, d] = queue.front();
    queue.pop_front();
    if (depth >= 0 && d >= depth) continue;
    if (site.dead.count(page) || not_expanded.count(page)) continue;
    for (int next : site.links[page]) {
      if (seen.insert(next).second) queue.emplace_back(next, d + 1);
    }
  }
  return seen;
}

std::string page_path(int id) { return "/p/" + std::to_string(id); }

std::string AccessEntry::header(const std::string& name) const {
  for (const auto& [k, v] : headers) {
    if (iequals(k, name)) return v;
  }
  return {};
}

std::vector<std::string> AccessEntry::header_values(const std::string& name) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : headers) {
    if (iequals(k, name)) out.push_back(v);
  }
  return out;
}

MockMarket::MockMarket(SiteSpec spec, int port)
    : spec_(std::move(spec)), site_(generate_site(spec_)), server_(std::make_unique<httplib::Server>()) {
  for (const auto& f : spec_.fault_plan) faults_[f.page] = f;
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    handle(req, res);
  };
  server_->Get(".*", handler);
  server_->Post(".*", handler);
  // httplib's default also sets SO_REUSEPORT, which lets a second server
  // share a taken port silently.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  if (port == 0) {
    port_ = server_->bind_to_any_port("127.0.0.1");
  } else {
    port_ = server_->bind_to_port("127.0.0.1", port) ? port : -1;
  }
  if (port_ <= 0) throw std::runtime_error("mock market cannot bind a port");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

MockMarket::~MockMarket() { stop(); }

void MockMarket::stop() {
  if (!thread_.joinable()) return;
  server_->stop();
  thread_.join();
}

std::string MockMarket::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_);
}

std::string MockMarket::url(int page) const { return base_url() + page_path(page); }

std::string MockMarket::mint_session() {
  std::lock_guard lock(mu_);
  std::string token = "s" + std::to_string(next_token_++);
  sessions_[token] = spec_.cookie_ttl_requests;
  return token;
}

std::vector<AccessEntry> MockMarket::access_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t MockMarket::requests_to(const std::string& path) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(
      log_.begin(), log_.end(), [&](const AccessEntry& e) { return e.path == path; }));
}

void MockMarket::clear_log() {
  std::lock_guard lock(mu_);
  log_.clear();
}

bool MockMarket::session_ok(const std::string& token) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(token);
  if (it == sessions_.end()) return false;
  auto& left = it->second;
  if (!left) return true;
  if (*left <= 0) return false;
  --*left;
  return true;
}

void MockMarket::handle(const httplib::Request& req, httplib::Response& res) {
  const int now = ++active_;
  int prev = max_concurrency_.load();
  while (now > prev && !max_concurrency_.compare_exchange_weak(prev, now)) {
  }
  if (spec_.response_delay.count() > 0) std::this_thread::sleep_for(spec_.response_delay);

  const std::string path = origin_path(req.target);
  const std::string session = session_from(req.get_header_value("Cookie"));
  const auto html = "text/html; charset=utf-8";

  if (path == "/") {
    res.status = 302;
    res.set_header("Location", "/p/0");
  } else if (path == "/captcha.png") {
    res.set_content(std::string("\x89PNG\r\n\x1a\n", 8), "image/png");
  } else if (path == "/login") {
    if (req.method == "POST") {
      const auto form = parse_form(req.body);
      const auto user = form.find("username");
      const auto pass = form.find("password");
      if (user != form.end() && pass != form.end() && user->second == spec_.username &&
          pass->second == spec_.password) {
        res.status = 302;
        res.set_header("Set-Cookie", "session=" + mint_session() + "; Path=/; HttpOnly");
        res.set_header("Location", "/p/0");
      } else {
        res.set_content(login_page("Invalid username or password."), html);
      }
    } else {
      res.set_content(login_page(""), html);
    }
  } else if (path.rfind("/p/", 0) == 0) {
    std::string rest = path.substr(3);
    bool solve = false;
    if (rest.size() > 6 && rest.compare(rest.size() - 6, 6, "/solve") == 0) {
      solve = true;
      rest.resize(rest.size() - 6);
    }
    const auto id = parse_id(rest);
    if (!id || *id >= spec_.page_count) {
      res.status = 404;
      res.set_content("<html><body>not found</body></html>", html);
    } else if (spec_.login_required && !session_ok(session)) {
      res.status = 302;
      res.set_header("Location", "/login");
    } else if (solve) {
      if (req.method != "POST") {
        res.status = 405;
      } else {
        const auto form = parse_form(req.body);
        const auto answer = form.find("answer");
        if (answer != form.end() && answer->second == std::to_string(captcha_answer(*id))) {
          {
            std::lock_guard lock(mu_);
            solved_.insert(*id);
          }
          res.status = 303;
          res.set_header("Location", page_path(*id));
        } else {
          res.set_content(captcha_wall(*id), html);
        }
      }
    } else {
      serve_page(*id, res);
    }
  } else {
    res.status = 404;
    res.set_content("<html><body>not found</body></html>", html);
  }

  AccessEntry entry;
  entry.method = req.method;
  entry.target = req.target;
  entry.path = path;
  for (const auto& [k, v] : req.headers) entry.headers.emplace(k, v);
  entry.body = req.body;
  // httplib fills in 200 after the handler when content was set.
  entry.status = res.status == -1 ? 200 : res.status;
  {
    std::lock_guard lock(mu_);
    entry.seq = log_.size() + 1;
    log_.push_back(std::move(entry));
  }
  --active_;
}

void MockMarket::serve_page(int id, httplib::Response& res) {
  const auto html = "text/html; charset=utf-8";
  if (auto f = faults_.find(id); f != faults_.end()) {
    const auto& rule = f->second;
    switch (rule.kind) {
      case FaultRule::Kind::kAlways404:
        res.status = 404;
        res.set_content("<html><body>gone</body></html>", html);
        return;
      case FaultRule::Kind::kRedirectToLogin:
        res.status = 302;
        res.set_header("Location", "/login");
        return;
      case FaultRule::Kind::kNTimes503: {
        std::lock_guard lock(mu_);
        if (hits_503_[id]++ < rule.n) {
          res.status = 503;
          res.set_content("<html><body>temporarily unavailable</body></html>", html);
          return;
        }
        break;
      }
      case FaultRule::Kind::kMirrorOf:
        break;
    }
  }
  bool walled = false;
  if (spec_.captcha_pages.count(id)) {
    std::lock_guard lock(mu_);
    walled = !solved_.count(id);
  }
  if (walled) {
    res.set_content(captcha_wall(id), html);
    return;
  }
  res.set_content(site_.bodies[id], html);
}

}  // namespace mockmarket
