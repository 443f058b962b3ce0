#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "onioncrawl/captcha.hpp"
#include "onioncrawl/config.hpp"

namespace httplib {
class Server;
}

namespace onioncrawl {

struct Event {
  std::uint64_t seq = 0;  // 1-based, strictly increasing
  std::string type;       // page, challenge_opened, challenge_closed, state_change
  std::string ts;         // RFC 3339
  nlohmann::ordered_json payload;

  nlohmann::ordered_json to_json() const;
};

// Append-only event log with blocking readers. Everything published during a
// crawl is retained so late subscribers can replay from the start.
class EventHub {
 public:
  std::uint64_t publish(std::string type, nlohmann::ordered_json payload);

  // Events with seq > after; waits up to timeout when there are none yet.
  std::vector<Event> wait_after(std::uint64_t after, std::chrono::milliseconds timeout);
  std::vector<Event> snapshot() const;

  // Wakes all readers; wait_after returns immediately from then on.
  void close();
  bool closed() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Event> events_;
  bool closed_ = false;
};

struct Command {
  enum class Kind { kPause, kResume, kStop, kInjectCookie };
  Kind kind = Kind::kPause;
  std::optional<CookieSpec> cookie;
};

class CommandQueue {
 public:
  void push(Command c);
  std::optional<Command> try_pop();
  // Blocks up to timeout for a command.
  std::optional<Command> wait_pop(std::chrono::milliseconds timeout);

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Command> queue_;
};

// Everything the crawl shares with outside observers and operators. The
// crawl loop publishes events and status; the API only reads those and
// enqueues commands or challenge solutions.
struct ControlPlane {
  EventHub events;
  CommandQueue commands;
  std::shared_ptr<ChallengeRegistry> challenges = std::make_shared<ChallengeRegistry>();

  void set_status(nlohmann::ordered_json status);
  nlohmann::ordered_json status() const;

  // Host given to cookies posted without a domain.
  void set_cookie_domain(std::string domain);
  std::string cookie_domain() const;

 private:
  mutable std::mutex mu_;
  nlohmann::ordered_json status_ = nlohmann::ordered_json::object();
  std::string cookie_domain_;
};

nlohmann::ordered_json challenge_to_json(const CaptchaChallenge& c);

// Body of POST /api/challenges/{id}/solution: {"fields": {...}} or
// {"cookie": {"name", "value"[, "domain", "path"]}}. nullopt when malformed.
std::optional<ChallengeSolution> parse_solution_json(const nlohmann::json& body,
                                                     const std::string& id,
                                                     const std::string& cookie_domain);

// HTTP control/event API on 127.0.0.1:
//   GET  /api/status                   status snapshot
//   GET  /api/events                   server-sent events (Last-Event-ID honored)
//   GET  /api/challenges               pending challenges
//   POST /api/challenges/{id}/solution 200, 404 unknown, 409 closed, 400 malformed
//   POST /api/control                  {"action": "pause"|"resume"|"stop"}
//   POST /api/cookies                  CookieSpec
class ControlServer {
 public:
  // Binds immediately (port 0 picks a free port); throws ConfigError when the
  // port cannot be bound.
  ControlServer(ControlPlane& plane, int port);
  ~ControlServer();
  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  int port() const { return port_; }
  void stop();

 private:
  ControlPlane& plane_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace onioncrawl
