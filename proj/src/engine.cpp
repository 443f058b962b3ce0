#include "onioncrawl/engine.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "onioncrawl/errors.hpp"
#include "onioncrawl/session.hpp"
#include "onioncrawl/transport.hpp"

namespace onioncrawl {
namespace {

template <typename T>
nlohmann::ordered_json or_null(const std::optional<T>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::kMaxDepth: return "MaxDepth";
    case StopReason::kMaxLinks: return "MaxLinks";
    case StopReason::kTimeLimit: return "TimeLimit";
    case StopReason::kTargetsComplete: return "TargetsComplete";
    case StopReason::kFrontierExhausted: return "FrontierExhausted";
    case StopReason::kOperatorStop: return "OperatorStop";
  }
  return "FrontierExhausted";
}

std::optional<StopReason> should_stop(const CrawlState& state, const CrawlConfig& cfg,
                                      std::chrono::milliseconds elapsed, bool work_left) {
  if (cfg.time_limit && elapsed >= *cfg.time_limit) return StopReason::kTimeLimit;
  if (cfg.max_links && state.pages_downloaded >= *cfg.max_links) return StopReason::kMaxLinks;
  if (state.targets_remaining && *state.targets_remaining == 0) {
    return StopReason::kTargetsComplete;
  }
  if (!work_left) return StopReason::kFrontierExhausted;
  return std::nullopt;
}

nlohmann::ordered_json CrawlSummary::to_json() const {
  nlohmann::ordered_json j;
  j["stop_reason"] = state.stop_reason ? nlohmann::ordered_json(to_string(*state.stop_reason))
                                       : nlohmann::ordered_json(nullptr);
  j["starting_link"] = starting_link ? nlohmann::ordered_json(starting_link->to_string())
                                     : nlohmann::ordered_json(nullptr);
  j["started_at"] = rfc3339(state.started_at);
  j["finished_at"] = rfc3339(finished_at);
  j["elapsed_s"] = elapsed_s;
  j["counters"] = {
      {"pages_identified", state.pages_identified},
      {"pages_downloaded", state.pages_downloaded},
      {"pages_failed", state.pages_failed},
      {"pages_duplicate", state.pages_duplicate},
      {"pages_skipped", state.pages_skipped},
      {"pages_dequeued", dequeued.size()},
  };
  j["metrics"] = metrics.to_json();
  j["manifest_path"] = manifest_path.string();
  auto challenge_list = nlohmann::ordered_json::array();
  for (const auto& c : challenges) {
    challenge_list.push_back({{"id", c.id},
                              {"url", c.url.to_string()},
                              {"depth", c.depth},
                              {"matched_pattern", c.matched_pattern},
                              {"created_at", rfc3339(c.created_at)},
                              {"state", to_string(c.state)}});
  }
  j["challenges"] = std::move(challenge_list);
  auto rotation_list = nlohmann::ordered_json::array();
  for (const auto& r : rotations) {
    rotation_list.push_back(
        {{"after_requests", r.after_requests},
         {"cause", r.cause},
         {"from", or_null(r.from)},
         {"to", or_null(r.to)},
         {"relogin", r.relogin}});
  }
  j["cookie_rotations"] = std::move(rotation_list);
  j["max_depth"] = or_null(max_depth);
  j["workers"] = workers;
  j["seed"] = seed;
  return j;
}

namespace {

using Steady = std::chrono::steady_clock;

// The jar draws from its own stream so adding a user agent does not change
// the cookie order for a given seed.
constexpr std::uint64_t kJarSeedSalt = 0x9e3779b97f4a7c15ULL;
constexpr int kMaxAuthRetries = 2;

template <typename T>
class Channel {
 public:
  void push(T v) {
    {
      std::lock_guard lock(mu_);
      items_.push_back(std::move(v));
    }
    cv_.notify_one();
  }

  // Blocks until an item arrives or the channel is closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
    return take();
  }

  std::optional<T> pop_for(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
    return take();
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::optional<T> take() {
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct Job {
  enum class Kind { kFetch, kSolve };
  Kind kind = Kind::kFetch;
  FrontierEntry entry;
  std::vector<CookieSpec> cookies;  // snapshot; at most the current cookie
  std::optional<std::size_t> cookie_index;
  std::string user_agent;
  FormFields solve_fields;
  CanonicalUrl solve_action;
  int auth_retries = 0;
  int captcha_round = 0;
  int wall_status = 0;  // status of the captcha page that led here
};

struct Completion {
  Job job;
  FetchResult result;
  // Set when a captcha wait ends rather than a fetch.
  std::optional<std::string> challenge_id;
  std::optional<ChallengeSolution> solution;
};

bool lands_on_login(const FetchResult& r, const AuthContext& auth) {
  if (r.redirect_chain.empty()) return false;
  // Comparing the landing page with itself leaves only the login checks.
  const auto& landed = r.redirect_chain.back().location;
  return detect_unexpected_redirect(landed, r.redirect_chain, auth.login_path,
                                    auth.redirect_markers);
}

bool has_marker(const FetchResult& r, const AuthContext& auth) {
  return auth.home_marker.empty() || r.body.find(auth.home_marker) != std::string::npos;
}

std::string describe_failure(const FetchResult& r) {
  std::string s = std::string(to_string(r.status_class));
  if (!r.error.empty()) s += ": " + r.error;
  return s;
}

}  // namespace

class Crawler::Loop {
 public:
  Loop(const CrawlConfig& cfg, const MarketMetadata& meta, ControlPlane& plane,
       bool api_served, std::istream* in, std::ostream* out)
      : cfg_(cfg),
        meta_(meta),
        plane_(plane),
        api_served_(api_served),
        transport_(TransportSettings::from(cfg)),
        rotator_(cfg.user_agents, cfg.rng_seed),
        jar_(meta.cookies, cfg.rng_seed ^ kJarSeedSalt),
        auth_(auth_context(meta)),
        frontier_(cfg.max_depth),
        prompt_in_(in),
        prompt_out_(out) {
    if (cfg_.captcha_policy.kind == CaptchaPolicy::Kind::kScript) {
      script_ = CaptchaScript::load(cfg_.captcha_policy.script_file);
    }
  }

  ~Loop() { shutdown_threads(); }

  CrawlSummary run();

 private:
  std::chrono::milliseconds elapsed() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Steady::now() - t0_);
  }
  std::size_t active() const { return in_flight_ + waiting_; }
  bool work_left() const { return !frontier_.empty() || active() > 0; }

  void start_workers();
  void shutdown_threads();

  std::string admit(const CanonicalUrl& url, FetchResult& probe);
  std::string clear_root_captcha(const CanonicalUrl& url, FetchResult& probe);
  std::optional<ChallengeSolution> resolve_now(const CaptchaChallenge& ch);

  void control_step();
  void apply(const Command& c);
  void dispatch_ready();
  void dispatch(Job job);
  Job make_job(const FrontierEntry& entry);

  void handle(Completion c);
  void handle_fetch(Completion& c);
  void handle_auth_redirect(Completion& c);
  void handle_captcha(Completion& c, CaptchaChallenge ch);
  void handle_challenge_end(Completion& c);
  void handle_page(const Job& job, const FetchResult& r);

  void fail(const Job& job, int status, std::int64_t elapsed_ms, std::string cause);
  void commit(PageRecord rec);
  void note_success(const Job& job);
  void rotate(const std::string& cause);
  bool relogin();
  std::optional<CookieSpec> current_cookie_copy() const;

  void begin_stop(StopReason reason);
  void publish_state(const std::string& state);
  void publish_status();
  std::string run_state() const;

  const CrawlConfig& cfg_;
  const MarketMetadata& meta_;
  ControlPlane& plane_;
  bool api_served_;
  Transport transport_;
  UserAgentRotator rotator_;
  CookieJar jar_;
  AuthContext auth_;
  Frontier frontier_;
  std::istream* prompt_in_;
  std::ostream* prompt_out_;
  std::optional<CaptchaScript> script_;
  std::unique_ptr<ConsolePrompt> prompt_;

  std::unique_ptr<PageStore> store_;
  Steady::time_point t0_;
  CrawlState state_;
  std::optional<CanonicalUrl> root_;
  std::optional<FetchResult> root_probe_;
  std::set<std::string> remaining_targets_;
  std::vector<PageRecord> records_;
  std::vector<FrontierEntry> dequeued_;
  std::vector<std::string> enqueued_;
  std::vector<CookieRotation> rotations_;
  std::size_t successes_ = 0;
  std::size_t uses_on_current_ = 0;

  Channel<Job> jobs_;
  Channel<Completion> done_;
  std::vector<std::thread> workers_;
  std::vector<std::thread> waiters_;
  std::size_t in_flight_ = 0;
  std::size_t waiting_ = 0;
  int active_depth_ = 0;
  bool paused_ = false;
  bool stopping_ = false;
};

void Crawler::Loop::start_workers() {
  for (int i = 0; i < cfg_.workers; ++i) {
    workers_.emplace_back([this] {
      while (auto job = jobs_.pop()) {
        if (cfg_.politeness_delay.count() > 0) std::this_thread::sleep_for(cfg_.politeness_delay);
        Completion c{std::move(*job), {}, std::nullopt, std::nullopt};
        try {
          if (c.job.kind == Job::Kind::kSolve) {
            const auto posted = transport_.post_form(c.job.solve_action, c.job.solve_fields,
                                                     c.job.cookies, c.job.user_agent);
            spdlog::debug("captcha answer for {} posted: status {}",
                          c.job.entry.url.to_string(), posted.final_status);
          }
          c.result = transport_.fetch(c.job.entry.url, c.job.cookies, c.job.user_agent);
        } catch (const std::exception& e) {
          c.result.requested = c.job.entry.url;
          c.result.final_url = c.job.entry.url;
          c.result.error = e.what();
        }
        done_.push(std::move(c));
      }
    });
  }
}

void Crawler::Loop::shutdown_threads() {
  plane_.challenges->abandon_all();
  jobs_.close();
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
  for (auto& t : waiters_) {
    if (t.joinable()) t.join();
  }
  workers_.clear();
  waiters_.clear();
}

std::optional<CookieSpec> Crawler::Loop::current_cookie_copy() const {
  if (const auto* c = jar_.current()) return *c;
  return std::nullopt;
}

std::string Crawler::Loop::admit(const CanonicalUrl& url, FetchResult& probe) {
  root_ = url;
  plane_.set_cookie_domain(url.host);
  const auto used = jar_.current_index();
  const bool login_wall = lands_on_login(probe, auth_);

  if (!login_wall && probe.status_class != StatusClass::kOk) return describe_failure(probe);

  if (!login_wall) {
    if (auto diagnosis = clear_root_captcha(url, probe); !diagnosis.empty()) return diagnosis;
  }
  if (!lands_on_login(probe, auth_) && probe.ok() && has_marker(probe, auth_)) {
    if (used) jar_.set_status(*used, CookieStatus::kValid);
    return {};
  }

  // Not in: try the remaining cookies, then the login form.
  if (used && lands_on_login(probe, auth_)) jar_.set_status(*used, CookieStatus::kInvalid);
  while (jar_.advance()) {
    const auto idx = *jar_.current_index();
    auto check = check_cookie(transport_, url, jar_.cookies()[idx], auth_, rotator_.next());
    if (check.verdict == CookieCheck::kValid) {
      jar_.set_status(idx, CookieStatus::kValid);
      probe = std::move(check.probe);
      return {};
    }
    if (check.verdict == CookieCheck::kInvalid) jar_.set_status(idx, CookieStatus::kInvalid);
  }
  jar_.shuffle_rotation();

  if (meta_.credentials) {
    auto r = login(meta_, url, transport_, rotator_.next());
    if (r.outcome != LoginOutcome::kOk) {
      return std::string(to_string(r.outcome)) + ": " + r.detail;
    }
    const auto idx = jar_.add(*r.cookie, true);
    jar_.set_status(idx, CookieStatus::kValid);
    probe = std::move(r.home);
    return {};
  }
  if (lands_on_login(probe, auth_)) {
    return "redirected to " + probe.final_url.to_string() + " and no usable cookie or credentials";
  }
  if (!probe.ok()) return describe_failure(probe);
  return "home marker '" + auth_.home_marker + "' absent";
}

std::optional<ChallengeSolution> Crawler::Loop::resolve_now(const CaptchaChallenge& ch) {
  auto& registry = *plane_.challenges;
  switch (cfg_.captcha_policy.kind) {
    case CaptchaPolicy::Kind::kFail:
      registry.abandon(ch.id);
      return std::nullopt;
    case CaptchaPolicy::Kind::kScript: {
      auto sol = script_->lookup(ch.url);
      if (!sol) {
        registry.abandon(ch.id);
        return std::nullopt;
      }
      sol->challenge_id = ch.id;
      registry.submit(*sol);
      return sol;
    }
    case CaptchaPolicy::Kind::kInteractive:
    case CaptchaPolicy::Kind::kAbandon:
      if (prompt_) prompt_->enqueue(ch);
      return registry.await_solution(ch.id, cfg_.captcha_timeout);
  }
  return std::nullopt;
}

std::string Crawler::Loop::clear_root_captcha(const CanonicalUrl& url, FetchResult& probe) {
  auto ch = detect_captcha(probe.body, probe.final_url, meta_.captcha_hints);
  if (!ch) return {};
  auto& registry = *plane_.challenges;
  const auto id = registry.open(*ch);
  const auto opened = *registry.find(id);
  plane_.events.publish("challenge_opened", challenge_to_json(opened));
  auto sol = resolve_now(opened);
  plane_.events.publish("challenge_closed",
                        {{"id", id}, {"state", to_string(registry.find(id)->state)}});
  if (!sol) return "captcha on the starting link was not solved";

  if (sol->cookie) {
    auto cookie = *sol->cookie;
    if (cookie.domain.empty()) cookie.domain = url.host;
    jar_.add(std::move(cookie), true);
  }
  std::vector<CookieSpec> cookies;
  if (auto c = current_cookie_copy()) cookies.push_back(*c);
  const auto& ua = rotator_.next();
  if (!sol->fields.empty()) {
    transport_.post_form(opened.form_action, sol->fields, cookies, ua);
  }
  probe = transport_.fetch(url, cookies, ua);
  if (detect_captcha(probe.body, probe.final_url, meta_.captcha_hints)) {
    return "captcha on the starting link persists after the submitted solution";
  }
  return {};
}

Job Crawler::Loop::make_job(const FrontierEntry& entry) {
  Job job;
  job.entry = entry;
  if (auto c = current_cookie_copy()) {
    job.cookies.push_back(*c);
    job.cookie_index = jar_.current_index();
  }
  job.user_agent = rotator_.next();
  return job;
}

void Crawler::Loop::dispatch(Job job) {
  ++in_flight_;
  active_depth_ = job.entry.depth;
  state_.current_depth_in_flight = active_depth_;
  if (root_probe_ && job.entry.depth == 0 && job.kind == Job::Kind::kFetch &&
      job.entry.url == *root_) {
    // The validity probe already fetched the root with the current cookie.
    Completion c{std::move(job), std::move(*root_probe_), std::nullopt, std::nullopt};
    root_probe_.reset();
    done_.push(std::move(c));
    return;
  }
  jobs_.push(std::move(job));
}

void Crawler::Loop::dispatch_ready() {
  while (!paused_ && !stopping_ && in_flight_ < static_cast<std::size_t>(cfg_.workers) &&
         !frontier_.empty()) {
    // Depth d+1 starts only once depth d has drained.
    if (active() > 0 && frontier_.next_depth() != active_depth_) break;
    if (cfg_.max_links && state_.pages_downloaded + active() >= *cfg_.max_links) break;
    auto entry = *frontier_.dequeue();
    dequeued_.push_back(entry);
    dispatch(make_job(entry));
  }
}

void Crawler::Loop::fail(const Job& job, int status, std::int64_t elapsed_ms, std::string cause) {
  PageRecord rec;
  rec.url = job.entry.url.to_string();
  rec.depth = job.entry.depth;
  rec.status = status;
  rec.outcome = Outcome::kFailed;
  rec.fetched_at = rfc3339(SystemClock::now());
  rec.elapsed_ms = elapsed_ms;
  rec.cause = std::move(cause);
  store_->append(rec);
  commit(std::move(rec));
}

void Crawler::Loop::commit(PageRecord rec) {
  switch (rec.outcome) {
    case Outcome::kDownloaded: ++state_.pages_downloaded; break;
    case Outcome::kFailed: ++state_.pages_failed; break;
    case Outcome::kDuplicate: ++state_.pages_duplicate; break;
    case Outcome::kSkipped: ++state_.pages_skipped; break;
  }
  if ((rec.outcome == Outcome::kDownloaded || rec.outcome == Outcome::kDuplicate) &&
      remaining_targets_.erase(rec.url) > 0) {
    state_.targets_remaining = remaining_targets_.size();
  }
  plane_.events.publish("page", {{"url", rec.url},
                                 {"depth", rec.depth},
                                 {"status", rec.status},
                                 {"outcome", to_string(rec.outcome)}});
  records_.push_back(std::move(rec));
  publish_status();
}

void Crawler::Loop::note_success(const Job& job) {
  ++successes_;
  if (!job.cookie_index || job.cookie_index != jar_.current_index()) return;
  if (++uses_on_current_ >= static_cast<std::size_t>(cfg_.rotation_period)) rotate("period");
}

void Crawler::Loop::rotate(const std::string& cause) {
  if (jar_.empty() && !meta_.credentials) return;
  CookieRotation rot;
  rot.after_requests = successes_;
  rot.cause = cause;
  rot.from = jar_.current_index();
  if (!jar_.advance()) {
    jar_.shuffle_rotation();
    if (meta_.credentials) rot.relogin = relogin();
  }
  rot.to = jar_.current_index();
  uses_on_current_ = 0;
  spdlog::info("cookie rotation ({}): {} -> {}", cause,
               rot.from ? std::to_string(*rot.from) : "none",
               rot.to ? std::to_string(*rot.to) : "none");
  rotations_.push_back(rot);
}

bool Crawler::Loop::relogin() {
  auto r = login(meta_, *root_, transport_, rotator_.next());
  if (r.outcome != LoginOutcome::kOk) {
    spdlog::warn("re-login failed: {} ({})", to_string(r.outcome), r.detail);
    return false;
  }
  const auto idx = jar_.add(*r.cookie, true);
  jar_.set_status(idx, CookieStatus::kValid);
  return true;
}

void Crawler::Loop::handle(Completion c) {
  if (c.challenge_id) {
    --waiting_;
    handle_challenge_end(c);
  } else {
    --in_flight_;
    handle_fetch(c);
  }
}

void Crawler::Loop::handle_fetch(Completion& c) {
  const auto& r = c.result;
  if (lands_on_login(r, auth_)) return handle_auth_redirect(c);
  if (r.final_status != 0 && r.is_html() && !r.body.empty() &&
      r.status_class != StatusClass::kNotFound) {
    if (auto ch = detect_captcha(r.body, r.final_url, meta_.captcha_hints)) {
      return handle_captcha(c, std::move(*ch));
    }
  }
  handle_page(c.job, r);
}

void Crawler::Loop::handle_auth_redirect(Completion& c) {
  const auto& job = c.job;
  const auto& r = c.result;
  if (stopping_) return fail(job, r.final_status, r.elapsed.count(), "stopped");

  if (job.cookie_index && jar_.status(*job.cookie_index) != CookieStatus::kInvalid) {
    // One page bouncing to the login form may be that page's own wall; only
    // a failing re-check on the starting link condemns the cookie.
    const auto idx = *job.cookie_index;
    auto check = check_cookie(transport_, *root_, jar_.cookies()[idx], auth_, rotator_.next());
    if (check.verdict == CookieCheck::kValid) {
      jar_.set_status(idx, CookieStatus::kValid);
      return fail(job, r.final_status, r.elapsed.count(), "unexpected_redirect");
    }
    if (check.verdict == CookieCheck::kTransient) {
      return fail(job, r.final_status, r.elapsed.count(), "auth_redirect");
    }
    jar_.set_status(idx, CookieStatus::kInvalid);
    if (jar_.current_index() == idx) rotate("unexpected_redirect");
  } else if (!job.cookie_index) {
    if (!meta_.credentials || !relogin()) {
      return fail(job, r.final_status, r.elapsed.count(), "auth_redirect");
    }
  }
  if (job.auth_retries >= kMaxAuthRetries || !jar_.current()) {
    return fail(job, r.final_status, r.elapsed.count(), "auth_redirect");
  }
  Job retry = make_job(job.entry);
  retry.auth_retries = job.auth_retries + 1;
  retry.captcha_round = job.captcha_round;
  dispatch(std::move(retry));
}

void Crawler::Loop::handle_captcha(Completion& c, CaptchaChallenge ch) {
  const auto& job = c.job;
  if (job.captcha_round > 0) {
    return fail(job, c.result.final_status, c.result.elapsed.count(), "captcha_unsolved");
  }
  auto& registry = *plane_.challenges;
  ch.depth = job.entry.depth;
  const auto id = registry.open(std::move(ch));
  const auto opened = *registry.find(id);
  plane_.events.publish("challenge_opened", challenge_to_json(opened));
  spdlog::info("captcha {} on {} (matched '{}')", id, opened.url.to_string(),
               opened.matched_pattern);

  Job next = job;
  next.wall_status = c.result.final_status;
  const auto kind = cfg_.captcha_policy.kind;
  if (stopping_ || kind == CaptchaPolicy::Kind::kFail || kind == CaptchaPolicy::Kind::kScript) {
    std::optional<ChallengeSolution> sol;
    if (!stopping_) {
      sol = resolve_now(opened);
    } else {
      registry.abandon(id);
    }
    Completion end{std::move(next), {}, id, std::move(sol)};
    ++waiting_;
    return handle(std::move(end));
  }
  if (kind == CaptchaPolicy::Kind::kInteractive && prompt_) prompt_->enqueue(opened);
  ++waiting_;
  waiters_.emplace_back([this, id, next = std::move(next)]() mutable {
    auto sol = plane_.challenges->await_solution(id, cfg_.captcha_timeout);
    done_.push(Completion{std::move(next), {}, id, std::move(sol)});
  });
}

void Crawler::Loop::handle_challenge_end(Completion& c) {
  const auto& id = *c.challenge_id;
  const auto state = plane_.challenges->find(id)->state;
  plane_.events.publish("challenge_closed", {{"id", id}, {"state", to_string(state)}});
  const auto& job = c.job;
  if (!c.solution) return fail(job, job.wall_status, 0, "captcha_abandoned");
  if (stopping_) return fail(job, job.wall_status, 0, "stopped");

  if (c.solution->cookie) {
    auto cookie = *c.solution->cookie;
    if (cookie.domain.empty()) cookie.domain = root_->host;
    jar_.add(std::move(cookie), true);
    uses_on_current_ = 0;
  }
  Job retry = make_job(job.entry);
  retry.captcha_round = job.captcha_round + 1;
  retry.auth_retries = job.auth_retries;
  retry.wall_status = job.wall_status;
  if (!c.solution->fields.empty()) {
    retry.kind = Job::Kind::kSolve;
    retry.solve_fields = c.solution->fields;
    retry.solve_action = plane_.challenges->find(id)->form_action;
  }
  dispatch(std::move(retry));
}

void Crawler::Loop::handle_page(const Job& job, const FetchResult& r) {
  const auto elapsed_ms = static_cast<std::int64_t>(r.elapsed.count());
  if (!r.ok()) return fail(job, r.final_status, elapsed_ms, describe_failure(r));

  PageRecord meta;
  meta.url = job.entry.url.to_string();
  meta.depth = job.entry.depth;
  meta.status = r.final_status;
  meta.fetched_at = rfc3339(SystemClock::now());
  meta.elapsed_ms = elapsed_ms;

  if (!r.redirect_chain.empty() && r.final_url != job.entry.url) {
    // Same-host redirect to some other page.
    rotate("unexpected_redirect");
    if (frontier_.seen(r.final_url)) {
      meta.outcome = Outcome::kSkipped;
      meta.cause = "redirect_to_seen " + r.final_url.to_string();
      store_->append(meta);
      return commit(std::move(meta));
    }
    frontier_.mark_seen(r.final_url);
  }

  auto rec = store_->store(meta, r.body);
  const bool fresh = rec.outcome == Outcome::kDownloaded;
  commit(rec);
  note_success(job);
  if (!fresh || !r.is_html()) return;
  for (const auto& link : extract_links(r.body, r.final_url)) {
    if (!is_internal(link, *root_)) continue;
    if (frontier_.enqueue(link, job.entry.depth + 1)) {
      ++state_.pages_identified;
      enqueued_.push_back(link.to_string());
    }
  }
}

void Crawler::Loop::apply(const Command& c) {
  switch (c.kind) {
    case Command::Kind::kPause:
      if (!paused_ && !stopping_) {
        paused_ = true;
        publish_state("paused");
      }
      break;
    case Command::Kind::kResume:
      if (paused_ && !stopping_) {
        paused_ = false;
        publish_state("running");
      }
      break;
    case Command::Kind::kStop:
      begin_stop(StopReason::kOperatorStop);
      break;
    case Command::Kind::kInjectCookie:
      if (c.cookie) {
        auto cookie = *c.cookie;
        if (cookie.domain.empty() && root_) cookie.domain = root_->host;
        jar_.add(std::move(cookie), true);
        uses_on_current_ = 0;
        spdlog::info("cookie {} injected by operator", c.cookie->name);
      }
      break;
  }
}

void Crawler::Loop::begin_stop(StopReason reason) {
  if (stopping_) return;
  stopping_ = true;
  state_.stop_reason = reason;
  spdlog::info("stopping: {}", to_string(reason));
  plane_.challenges->abandon_all();
  publish_state("stopping");
}

std::string Crawler::Loop::run_state() const {
  if (stopping_) return active() > 0 ? "stopping" : "finished";
  return paused_ ? "paused" : "running";
}

void Crawler::Loop::publish_state(const std::string& state) {
  nlohmann::ordered_json payload{{"state", state}};
  if (state_.stop_reason) payload["stop_reason"] = to_string(*state_.stop_reason);
  plane_.events.publish("state_change", std::move(payload));
  publish_status();
}

void Crawler::Loop::publish_status() {
  nlohmann::ordered_json s;
  s["state"] = run_state();
  s["pages_identified"] = state_.pages_identified;
  s["pages_downloaded"] = state_.pages_downloaded;
  s["pages_failed"] = state_.pages_failed;
  s["pages_duplicate"] = state_.pages_duplicate;
  s["pages_skipped"] = state_.pages_skipped;
  s["current_depth"] = state_.current_depth_in_flight;
  s["elapsed_s"] = static_cast<double>(elapsed().count()) / 1000.0;
  s["queued"] = frontier_.size();
  s["in_flight"] = in_flight_;
  s["pending_challenges"] = plane_.challenges->pending().size();
  nlohmann::ordered_json criteria;
  criteria["max_depth"] = or_null(cfg_.max_depth);
  criteria["max_links"] = or_null(cfg_.max_links);
  criteria["time_limit_s"] =
      cfg_.time_limit ? nlohmann::ordered_json(cfg_.time_limit->count() / 1000.0)
                      : nlohmann::ordered_json(nullptr);
  criteria["targets_total"] =
      cfg_.target_links ? nlohmann::ordered_json(cfg_.target_links->size())
                        : nlohmann::ordered_json(nullptr);
  criteria["targets_remaining"] = or_null(state_.targets_remaining);
  s["stop_criteria"] = std::move(criteria);
  s["stop_reason"] = state_.stop_reason
                         ? nlohmann::ordered_json(to_string(*state_.stop_reason))
                         : nlohmann::ordered_json(nullptr);
  plane_.set_status(std::move(s));
}

void Crawler::Loop::control_step() {
  while (auto cmd = plane_.commands.try_pop()) apply(*cmd);
  if (!stopping_) {
    if (auto reason = should_stop(state_, cfg_, elapsed(), work_left())) begin_stop(*reason);
  }
  dispatch_ready();
  if (active() == 0) {
    // Paused (or stopping with nothing left): idle until a command arrives.
    if (!stopping_) {
      if (auto cmd = plane_.commands.wait_pop(std::chrono::milliseconds(20))) apply(*cmd);
    }
    return;
  }

  auto wait = std::chrono::milliseconds(20);
  if (cfg_.time_limit && !stopping_) {
    const auto left = *cfg_.time_limit - elapsed();
    wait = std::clamp(left, std::chrono::milliseconds(1), wait);
  }
  if (auto c = done_.pop_for(wait)) handle(std::move(*c));
}

CrawlSummary Crawler::Loop::run() {
  t0_ = Steady::now();
  state_.started_at = SystemClock::now();
  if (cfg_.target_links) {
    for (const auto& t : *cfg_.target_links) remaining_targets_.insert(t.to_string());
    state_.targets_remaining = remaining_targets_.size();
  }
  store_ = std::make_unique<PageStore>(cfg_.output_dir);
  if (cfg_.captcha_policy.kind == CaptchaPolicy::Kind::kInteractive && !api_served_) {
    prompt_ = std::make_unique<ConsolePrompt>(plane_.challenges, *prompt_in_, *prompt_out_,
                                              std::string());
  }
  publish_state("starting");

  if (auto reason = should_stop(state_, cfg_, elapsed(), true)) {
    begin_stop(*reason);
  } else {
    std::vector<CookieSpec> initial;
    if (auto c = current_cookie_copy()) initial.push_back(*c);
    auto start = select_starting_link(
        meta_, transport_, rotator_, initial,
        [this](const CanonicalUrl& url, FetchResult& probe) { return admit(url, probe); });
    root_ = start.url;
    root_probe_ = std::move(start.probe);
    plane_.set_cookie_domain(root_->host);
    spdlog::info("starting link {}", root_->to_string());
    frontier_.enqueue(*root_, 0);
    ++state_.pages_identified;
    enqueued_.push_back(root_->to_string());
    start_workers();
    publish_state("running");
  }

  while (!stopping_ || active() > 0) control_step();
  shutdown_threads();
  prompt_.reset();

  CrawlSummary summary;
  summary.state = state_;
  summary.finished_at = SystemClock::now();
  const std::chrono::duration<double> wall = Steady::now() - t0_;
  summary.elapsed_s = wall.count();
  summary.starting_link = root_;
  summary.metrics = compute_run_metrics(records_, enqueued_, wall);
  summary.manifest_path = store_->manifest_path();
  summary.records = records_;
  summary.dequeued = dequeued_;
  summary.enqueued = enqueued_;
  summary.challenges = plane_.challenges->all();
  summary.rotations = rotations_;
  summary.max_depth = cfg_.max_depth;
  summary.workers = cfg_.workers;
  summary.seed = cfg_.rng_seed;

  const auto path = cfg_.output_dir / "summary.json";
  std::ofstream out(path, std::ios::trunc);
  out << summary.to_json().dump(2) << '\n';
  if (!out) throw StorageError("cannot write " + path.string());

  publish_state("finished");
  spdlog::info("crawl finished: {} downloaded, {} failed, stop reason {}",
               state_.pages_downloaded, state_.pages_failed,
               to_string(*state_.stop_reason));
  return summary;
}

Crawler::Crawler(ValidatedConfig cfg, MarketMetadata meta)
    : cfg_(std::move(cfg)),
      meta_(std::move(meta)),
      plane_(std::make_unique<ControlPlane>()),
      prompt_in_(&std::cin),
      prompt_out_(&std::cout) {
  if (cfg_->api_port) server_ = std::make_unique<ControlServer>(*plane_, *cfg_->api_port);
}

Crawler::~Crawler() {
  if (server_) server_->stop();
}

void Crawler::set_prompt_streams(std::istream& in, std::ostream& out) {
  prompt_in_ = &in;
  prompt_out_ = &out;
}

std::optional<int> Crawler::api_port() const {
  if (!server_) return std::nullopt;
  return server_->port();
}

CrawlSummary Crawler::run() {
  Loop loop(cfg_.get(), meta_, *plane_, server_ != nullptr, prompt_in_, prompt_out_);
  return loop.run();
}

CrawlSummary crawl(const ValidatedConfig& cfg, const MarketMetadata& meta) {
  Crawler crawler(cfg, meta);
  return crawler.run();
}

}  // namespace onioncrawl
