#include "onioncrawl/captcha.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "onioncrawl/errors.hpp"
#include "onioncrawl/html.hpp"

namespace onioncrawl {
namespace {

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

std::string percent_decode(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(ChallengeState s) {
  switch (s) {
    case ChallengeState::kPending: return "pending";
    case ChallengeState::kSolved: return "solved";
    case ChallengeState::kAbandoned: return "abandoned";
  }
  return "pending";
}

const std::vector<std::string>& default_captcha_hints() {
  static const std::vector<std::string> hints = {"captcha", "are you human",
                                                 "security check"};
  return hints;
}

std::optional<CaptchaChallenge> detect_captcha(std::string_view body,
                                               const CanonicalUrl& url,
                                               std::span<const std::string> hints) {
  const std::string haystack = lower(body);
  std::string matched;
  auto try_hints = [&](std::span<const std::string> list) {
    for (const auto& hint : list) {
      const auto needle = lower(trim(hint));
      if (!needle.empty() && haystack.find(needle) != std::string::npos) {
        matched = hint;
        return true;
      }
    }
    return false;
  };
  if (!try_hints(hints)) try_hints(default_captcha_hints());

  CaptchaChallenge c;
  c.url = url;
  c.form_action = url;
  bool have_form = false;
  html::scan_tags(body, [&](const html::Tag& tag) {
    if (tag.name == "img") {
      if (const auto* src = tag.attribute("src")) {
        if (auto resolved = normalize_url(*src, url)) c.image_refs.push_back(*resolved);
      }
    } else if (tag.name == "form" && !have_form) {
      have_form = true;
      if (const auto* action = tag.attribute("action"); action && !trim(*action).empty()) {
        if (auto resolved = normalize_url(*action, url)) c.form_action = *resolved;
      }
    }
  });
  if (matched.empty()) return std::nullopt;

  c.matched_pattern = matched;
  c.page_excerpt = std::string(body.substr(0, std::min(body.size(), kExcerptBytes)));
  c.created_at = SystemClock::now();
  return c;
}

std::optional<ChallengeSolution> parse_solution_text(std::string_view text,
                                                     const std::string& cookie_domain) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  ChallengeSolution s;
  if (text.rfind("cookie:", 0) == 0) {
    const auto kv = trim(text.substr(7));
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos || eq == 0) return std::nullopt;
    CookieSpec cookie;
    cookie.name = std::string(trim(kv.substr(0, eq)));
    cookie.value = std::string(trim(kv.substr(eq + 1)));
    cookie.domain = cookie_domain;
    cookie.source = CookieSource::kManual;
    s.cookie = std::move(cookie);
    return s;
  }
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto amp = text.find('&', pos);
    if (amp == std::string_view::npos) amp = text.size();
    const auto pair = text.substr(pos, amp - pos);
    pos = amp + 1;
    if (pair.empty()) continue;
    const auto eq = pair.find('=');
    if (eq == std::string_view::npos || eq == 0) return std::nullopt;
    s.fields.emplace_back(percent_decode(pair.substr(0, eq)),
                          percent_decode(pair.substr(eq + 1)));
  }
  if (s.fields.empty()) return std::nullopt;
  return s;
}

std::string ChallengeRegistry::open(CaptchaChallenge challenge) {
  std::lock_guard lock(mu_);
  std::string id = "c" + std::to_string(next_id_++);
  challenge.id = id;
  challenge.state = ChallengeState::kPending;
  order_.push_back(id);
  slots_.emplace(id, Slot{std::move(challenge), std::nullopt});
  return id;
}

SubmitStatus ChallengeRegistry::submit(ChallengeSolution solution) {
  {
    std::lock_guard lock(mu_);
    auto it = slots_.find(solution.challenge_id);
    if (it == slots_.end()) return SubmitStatus::kUnknown;
    if (it->second.challenge.state != ChallengeState::kPending) {
      return SubmitStatus::kConflict;
    }
    if (!solution.well_formed()) return SubmitStatus::kInvalid;
    it->second.challenge.state = ChallengeState::kSolved;
    it->second.solution = std::move(solution);
  }
  cv_.notify_all();
  return SubmitStatus::kAccepted;
}

std::optional<ChallengeSolution> ChallengeRegistry::await_solution(const std::string& id,
                                                                  Millis timeout) {
  std::unique_lock lock(mu_);
  auto it = slots_.find(id);
  if (it == slots_.end()) return std::nullopt;
  Slot& slot = it->second;
  cv_.wait_for(lock, timeout,
               [&] { return slot.challenge.state != ChallengeState::kPending; });
  if (slot.challenge.state == ChallengeState::kPending) {
    slot.challenge.state = ChallengeState::kAbandoned;
  }
  if (slot.challenge.state == ChallengeState::kSolved) return slot.solution;
  return std::nullopt;
}

bool ChallengeRegistry::abandon(const std::string& id) {
  {
    std::lock_guard lock(mu_);
    auto it = slots_.find(id);
    if (it == slots_.end() || it->second.challenge.state != ChallengeState::kPending) {
      return false;
    }
    it->second.challenge.state = ChallengeState::kAbandoned;
  }
  cv_.notify_all();
  return true;
}

void ChallengeRegistry::abandon_all() {
  {
    std::lock_guard lock(mu_);
    for (auto& [id, slot] : slots_) {
      if (slot.challenge.state == ChallengeState::kPending) {
        slot.challenge.state = ChallengeState::kAbandoned;
      }
    }
  }
  cv_.notify_all();
}

std::optional<CaptchaChallenge> ChallengeRegistry::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = slots_.find(id);
  if (it == slots_.end()) return std::nullopt;
  return it->second.challenge;
}

std::vector<CaptchaChallenge> ChallengeRegistry::pending() const {
  std::lock_guard lock(mu_);
  std::vector<CaptchaChallenge> out;
  for (const auto& id : order_) {
    const auto& c = slots_.at(id).challenge;
    if (c.state == ChallengeState::kPending) out.push_back(c);
  }
  return out;
}

std::vector<CaptchaChallenge> ChallengeRegistry::all() const {
  std::lock_guard lock(mu_);
  std::vector<CaptchaChallenge> out;
  out.reserve(order_.size());
  for (const auto& id : order_) out.push_back(slots_.at(id).challenge);
  return out;
}

CaptchaScript CaptchaScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open captcha script " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

CaptchaScript CaptchaScript::parse(std::string_view text) {
  CaptchaScript script;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto sp = line.find_first_of(" \t");
    if (sp == std::string_view::npos) {
      throw ConfigError("captcha script line " + std::to_string(line_no) +
                        ": expected '<url-or-path> <answer>'");
    }
    Entry e{std::string(line.substr(0, sp)), std::string(trim(line.substr(sp)))};
    if (!parse_solution_text(e.answer, "")) {
      throw ConfigError("captcha script line " + std::to_string(line_no) +
                        ": malformed answer");
    }
    script.entries_.push_back(std::move(e));
  }
  return script;
}

std::optional<ChallengeSolution> CaptchaScript::lookup(const CanonicalUrl& url) const {
  for (const auto& e : entries_) {
    bool hit = false;
    if (e.key.front() == '/') {
      hit = e.key == url.target() || e.key == url.path;
    } else if (auto parsed = normalize_url(e.key)) {
      hit = *parsed == url;
    }
    if (hit) return parse_solution_text(e.answer, url.host);
  }
  return std::nullopt;
}

struct ConsolePrompt::State {
  std::shared_ptr<ChallengeRegistry> registry;
  std::istream* in;
  std::ostream* out;
  std::string cookie_domain;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<CaptchaChallenge> queue;
  bool stopping = false;
  bool reading = false;
};

namespace {

void prompt_loop(const std::shared_ptr<ConsolePrompt::State>& st) {
  for (;;) {
    CaptchaChallenge c;
    {
      std::unique_lock lock(st->mu);
      st->cv.wait(lock, [&] { return st->stopping || !st->queue.empty(); });
      if (st->stopping) return;
      c = std::move(st->queue.front());
      st->queue.pop_front();
      st->reading = true;
    }
    const auto current = st->registry->find(c.id);
    if (current && current->state == ChallengeState::kPending) {
      auto& out = *st->out;
      out << "\ncaptcha " << c.id << " at " << c.url.to_string() << " (matched '"
          << c.matched_pattern << "')\n";
      for (const auto& img : c.image_refs) out << "  image: " << img.to_string() << "\n";
      out << "  answer with field=value lines, or cookie:name=value; end with an "
             "empty line\n"
          << std::flush;

      std::string joined;
      std::string line;
      while (std::getline(*st->in, line)) {
        const auto t = trim(line);
        if (t.empty()) break;
        if (!joined.empty()) joined += '&';
        joined += t;
        if (t.rfind("cookie:", 0) == 0) break;
      }
      if (joined.empty()) {
        spdlog::warn("console prompt: no answer for {}, abandoning", c.id);
        st->registry->abandon(c.id);
      } else if (auto s = parse_solution_text(joined, st->cookie_domain)) {
        s->challenge_id = c.id;
        const auto status = st->registry->submit(std::move(*s));
        if (status == SubmitStatus::kConflict) {
          out << "challenge " << c.id << " was already closed\n" << std::flush;
        }
      } else {
        out << "could not parse answer; abandoning " << c.id << "\n" << std::flush;
        st->registry->abandon(c.id);
      }
    }
    std::lock_guard lock(st->mu);
    st->reading = false;
  }
}

}  // namespace

ConsolePrompt::ConsolePrompt(std::shared_ptr<ChallengeRegistry> registry,
                             std::istream& in, std::ostream& out,
                             std::string cookie_domain)
    : state_(std::make_shared<State>()) {
  state_->registry = std::move(registry);
  state_->in = &in;
  state_->out = &out;
  state_->cookie_domain = std::move(cookie_domain);
  worker_ = std::thread([st = state_] { prompt_loop(st); });
}

ConsolePrompt::~ConsolePrompt() {
  bool reading = false;
  {
    std::lock_guard lock(state_->mu);
    state_->stopping = true;
    reading = state_->reading;
  }
  state_->cv.notify_all();
  if (reading) {
    worker_.detach();
  } else {
    worker_.join();
  }
}

void ConsolePrompt::enqueue(const CaptchaChallenge& challenge) {
  {
    std::lock_guard lock(state_->mu);
    state_->queue.push_back(challenge);
  }
  state_->cv.notify_all();
}

}  // namespace onioncrawl
