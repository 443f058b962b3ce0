#include "onioncrawl/frontier.hpp"

namespace onioncrawl {

bool Frontier::enqueue(const CanonicalUrl& url, int depth) {
  if (depth < 0 || (max_depth_ && depth > *max_depth_)) return false;
  if (!seen_.insert(url).second) return false;
  queue_.push_back(FrontierEntry{url, depth});
  return true;
}

std::optional<FrontierEntry> Frontier::dequeue() {
  if (queue_.empty()) return std::nullopt;
  FrontierEntry entry = std::move(queue_.front());
  queue_.pop_front();
  return entry;
}

std::optional<int> Frontier::next_depth() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.front().depth;
}

}  // namespace onioncrawl
