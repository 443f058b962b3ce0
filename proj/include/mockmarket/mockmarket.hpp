#pragma once

// Deterministic local marketplace used as a test oracle. Shares no code with
// the crawler: graph generation, request parsing and the reachability oracle
// are all separate implementations.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace httplib {
class Server;
struct Request;
struct Response;
}  // namespace httplib

namespace mockmarket {

struct FaultRule {
  enum class Kind { kAlways404, kNTimes503, kRedirectToLogin, kMirrorOf };
  int page = 0;
  Kind kind = Kind::kAlways404;
  int n = 0;   // kNTimes503
  int of = 0;  // kMirrorOf
};

struct SiteSpec {
  int page_count = 1;
  int branching = 3;
  std::uint64_t seed = 1;
  bool login_required = false;
  std::set<int> captcha_pages;
  std::vector<FaultRule> fault_plan;  // at most one rule per page
  std::optional<int> cookie_ttl_requests;
  std::string username = "user";
  std::string password = "pass";
  std::chrono::milliseconds response_delay{0};
};

// Throws std::invalid_argument on a malformed document.
SiteSpec parse_site_spec(const nlohmann::json& j);

inline constexpr const char* kHomeMarker = "MOCKMARKET-HOME";

struct SiteGraph {
  // Outgoing page links as served (a mirror serves its source's links).
  std::vector<std::vector<int>> links;
  std::vector<std::string> bodies;  // as served on a clean request
  // Pages whose content never reaches a client (404, login redirect).
  std::set<int> dead;
};

SiteGraph generate_site(const SiteSpec& spec);

// Pages within depth hops of page 0 by plain BFS; depth < 0 means
// unbounded. Pages in dead or not_expanded are reached but not expanded.
std::set<int> oracle_reachable(const SiteGraph& site, int depth,
                               const std::set<int>& not_expanded = {});

std::string page_path(int id);
inline int captcha_answer(int page) { return page % 97; }

struct AccessEntry {
  std::uint64_t seq = 0;
  std::string method;
  std::string target;  // as received (origin or absolute form)
  std::string path;    // origin-form path, query stripped
  std::multimap<std::string, std::string> headers;
  std::string body;
  int status = 0;

  std::string header(const std::string& name) const;  // first value or ""
  std::vector<std::string> header_values(const std::string& name) const;
};

// Serves a generated site on 127.0.0.1 from a background thread.
class MockMarket {
 public:
  // port 0 picks a free port.
  explicit MockMarket(SiteSpec spec, int port = 0);
  ~MockMarket();
  MockMarket(const MockMarket&) = delete;
  MockMarket& operator=(const MockMarket&) = delete;

  int port() const { return port_; }
  std::string host() const { return "127.0.0.1"; }
  std::string base_url() const;
  std::string url(int page) const;
  const SiteGraph& site() const { return site_; }
  const SiteSpec& spec() const { return spec_; }

  // A fresh valid session token (subject to cookie_ttl_requests).
  std::string mint_session();

  std::vector<AccessEntry> access_log() const;
  std::size_t requests_to(const std::string& path) const;
  void clear_log();
  int max_concurrency() const { return max_concurrency_.load(); }

  void stop();

 private:
  void handle(const httplib::Request& req, httplib::Response& res);
  void serve_page(int id, httplib::Response& res);
  bool session_ok(const std::string& token);

  SiteSpec spec_;
  SiteGraph site_;
  std::map<int, FaultRule> faults_;

  mutable std::mutex mu_;
  std::vector<AccessEntry> log_;
  std::map<std::string, std::optional<int>> sessions_;  // token -> uses left
  std::map<int, int> hits_503_;
  std::set<int> solved_;
  std::uint64_t next_token_ = 1;

  std::atomic<int> active_{0};
  std::atomic<int> max_concurrency_{0};

  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace mockmarket
