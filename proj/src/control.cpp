#include "onioncrawl/control.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "onioncrawl/clock.hpp"
#include "onioncrawl/errors.hpp"

namespace onioncrawl {

nlohmann::ordered_json Event::to_json() const {
  nlohmann::ordered_json j;
  j["type"] = type;
  j["ts"] = ts;
  j["payload"] = payload;
  return j;
}

std::uint64_t EventHub::publish(std::string type, nlohmann::ordered_json payload) {
  std::uint64_t seq;
  {
    std::lock_guard lock(mu_);
    seq = events_.size() + 1;
    events_.push_back(Event{seq, std::move(type), rfc3339(SystemClock::now()),
                            std::move(payload)});
  }
  cv_.notify_all();
  return seq;
}

std::vector<Event> EventHub::wait_after(std::uint64_t after,
                                        std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || events_.size() > after; });
  std::vector<Event> out;
  for (std::size_t i = after; i < events_.size(); ++i) out.push_back(events_[i]);
  return out;
}

std::vector<Event> EventHub::snapshot() const {
  std::lock_guard lock(mu_);
  return events_;
}

void EventHub::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool EventHub::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

void CommandQueue::push(Command c) {
  {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(c));
  }
  cv_.notify_all();
}

std::optional<Command> CommandQueue::try_pop() {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  Command c = std::move(queue_.front());
  queue_.pop_front();
  return c;
}

std::optional<Command> CommandQueue::wait_pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty(); });
  if (queue_.empty()) return std::nullopt;
  Command c = std::move(queue_.front());
  queue_.pop_front();
  return c;
}

void ControlPlane::set_status(nlohmann::ordered_json status) {
  std::lock_guard lock(mu_);
  status_ = std::move(status);
}

nlohmann::ordered_json ControlPlane::status() const {
  std::lock_guard lock(mu_);
  return status_;
}

void ControlPlane::set_cookie_domain(std::string domain) {
  std::lock_guard lock(mu_);
  cookie_domain_ = std::move(domain);
}

std::string ControlPlane::cookie_domain() const {
  std::lock_guard lock(mu_);
  return cookie_domain_;
}

nlohmann::ordered_json challenge_to_json(const CaptchaChallenge& c) {
  nlohmann::ordered_json j;
  j["id"] = c.id;
  j["url"] = c.url.to_string();
  j["depth"] = c.depth;
  j["matched_pattern"] = c.matched_pattern;
  j["excerpt"] = c.page_excerpt;
  auto images = nlohmann::ordered_json::array();
  for (const auto& img : c.image_refs) images.push_back(img.to_string());
  j["image_refs"] = std::move(images);
  j["form_action"] = c.form_action.to_string();
  j["created_at"] = rfc3339(c.created_at);
  j["state"] = to_string(c.state);
  return j;
}

std::optional<ChallengeSolution> parse_solution_json(const nlohmann::json& body,
                                                     const std::string& id,
                                                     const std::string& cookie_domain) {
  if (!body.is_object()) return std::nullopt;
  ChallengeSolution s;
  s.challenge_id = id;
  const auto fields = body.find("fields");
  const auto cookie = body.find("cookie");
  if (fields != body.end() && !fields->is_null()) {
    if (!fields->is_object()) return std::nullopt;
    for (const auto& [k, v] : fields->items()) {
      if (k.empty()) return std::nullopt;
      s.fields.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
    }
  }
  if (cookie != body.end() && !cookie->is_null()) {
    if (!cookie->is_object()) return std::nullopt;
    CookieSpec c;
    c.name = cookie->value("name", "");
    c.value = cookie->value("value", "");
    c.domain = cookie->value("domain", cookie_domain);
    c.path = cookie->value("path", "/");
    if (c.name.empty()) return std::nullopt;
    s.cookie = std::move(c);
  }
  if (!s.well_formed()) return std::nullopt;
  return s;
}

namespace {

void reply_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply_json(res, status, nlohmann::ordered_json{{"error", message}});
}

std::optional<nlohmann::json> parse_body(const httplib::Request& req,
                                         httplib::Response& res) {
  auto body = nlohmann::json::parse(req.body, nullptr, false);
  if (body.is_discarded()) {
    reply_error(res, 400, "body is not valid JSON");
    return std::nullopt;
  }
  return body;
}

}  // namespace

ControlServer::ControlServer(ControlPlane& plane, int port)
    : plane_(plane), server_(std::make_unique<httplib::Server>()) {
  auto& svr = *server_;
  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

  svr.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
    reply_json(res, 200, plane_.status());
  });

  svr.Get("/api/challenges", [this](const httplib::Request&, httplib::Response& res) {
    auto list = nlohmann::ordered_json::array();
    for (const auto& c : plane_.challenges->pending()) list.push_back(challenge_to_json(c));
    reply_json(res, 200, list);
  });

  svr.Post(R"(/api/challenges/([^/]+)/solution)",
           [this](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.matches[1];
             if (!plane_.challenges->find(id)) return reply_error(res, 404, "unknown challenge");
             auto body = parse_body(req, res);
             if (!body) return;
             auto solution = parse_solution_json(*body, id, plane_.cookie_domain());
             if (!solution) {
               return reply_error(res, 400, "expected exactly one of fields or cookie");
             }
             switch (plane_.challenges->submit(std::move(*solution))) {
               case SubmitStatus::kAccepted:
                 return reply_json(res, 200, {{"id", id}, {"state", "solved"}});
               case SubmitStatus::kUnknown:
                 return reply_error(res, 404, "unknown challenge");
               case SubmitStatus::kConflict:
                 return reply_error(res, 409, "challenge is no longer pending");
               case SubmitStatus::kInvalid:
                 return reply_error(res, 400, "expected exactly one of fields or cookie");
             }
           });

  svr.Post("/api/control", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    const std::string action = body->is_object() ? body->value("action", "") : "";
    Command c;
    if (action == "pause") {
      c.kind = Command::Kind::kPause;
    } else if (action == "resume") {
      c.kind = Command::Kind::kResume;
    } else if (action == "stop") {
      c.kind = Command::Kind::kStop;
    } else {
      return reply_error(res, 400, "action must be pause, resume or stop");
    }
    plane_.commands.push(std::move(c));
    reply_json(res, 200, {{"action", action}, {"accepted", true}});
  });

  svr.Post("/api/cookies", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    if (!body->is_object()) return reply_error(res, 400, "expected a cookie object");
    CookieSpec cookie;
    try {
      cookie.name = body->value("name", "");
      cookie.value = body->value("value", "");
      cookie.domain = body->value("domain", plane_.cookie_domain());
      cookie.path = body->value("path", "/");
    } catch (const nlohmann::json::exception&) {
      return reply_error(res, 400, "cookie fields must be strings");
    }
    if (cookie.name.empty()) return reply_error(res, 400, "cookie name is required");
    cookie.source = CookieSource::kManual;
    plane_.commands.push(Command{Command::Kind::kInjectCookie, cookie});
    reply_json(res, 200, {{"name", cookie.name}, {"accepted", true}});
  });

  svr.Get("/api/events", [this](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t start = 0;
    if (req.has_header("Last-Event-ID")) {
      try {
        start = std::stoull(req.get_header_value("Last-Event-ID"));
      } catch (const std::exception&) {
        start = 0;
      }
    }
    res.set_header("Cache-Control", "no-cache");
    auto last = std::make_shared<std::uint64_t>(start);
    res.set_chunked_content_provider(
        "text/event-stream", [this, last](std::size_t, httplib::DataSink& sink) {
          const auto batch = plane_.events.wait_after(*last, std::chrono::milliseconds(500));
          if (batch.empty()) {
            if (plane_.events.closed()) {
              sink.done();
              return true;
            }
            static constexpr char kKeepalive[] = ": keepalive\n\n";
            return sink.write(kKeepalive, sizeof kKeepalive - 1);
          }
          std::string chunk;
          for (const auto& e : batch) {
            chunk += "id: " + std::to_string(e.seq) + "\nevent: " + e.type +
                     "\ndata: " + e.to_json().dump() + "\n\n";
            *last = e.seq;
          }
          return sink.write(chunk.data(), chunk.size());
        });
  });

  // httplib's default also sets SO_REUSEPORT, which lets a second server
  // share a taken port silently.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  if (port == 0) {
    port_ = svr.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw ConfigError("cannot bind control API to a free port");
  } else {
    if (!svr.bind_to_port("127.0.0.1", port)) {
      throw ConfigError("cannot bind control API to port " + std::to_string(port));
    }
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  // A stop() that lands before the loop starts would be lost.
  server_->wait_until_ready();
  spdlog::info("control API on http://127.0.0.1:{}/api/status", port_);
}

ControlServer::~ControlServer() { stop(); }

void ControlServer::stop() {
  if (!thread_.joinable()) return;
  plane_.events.close();
  server_->stop();
  thread_.join();
}

}  // namespace onioncrawl
