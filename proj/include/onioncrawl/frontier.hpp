#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <unordered_set>

#include "onioncrawl/url.hpp"

namespace onioncrawl {

struct FrontierEntry {
  CanonicalUrl url;
  int depth = 0;  // hops from the starting link, which has depth 0

  friend bool operator==(const FrontierEntry&, const FrontierEntry&) = default;
};

// FIFO download queue plus visited set. Because every entry is enqueued at
// most once and children are enqueued at parent depth + 1, dequeue order is
// breadth-first with non-decreasing depths.
class Frontier {
 public:
  // nullopt max_depth means unbounded.
  explicit Frontier(std::optional<int> max_depth = std::nullopt)
      : max_depth_(max_depth) {}

  // Appends url iff it was never seen and depth is within bounds.
  bool enqueue(const CanonicalUrl& url, int depth);
  std::optional<FrontierEntry> dequeue();

  bool seen(const CanonicalUrl& url) const { return seen_.contains(url); }
  // Marks a URL as seen without queueing it (e.g. a redirect target).
  void mark_seen(const CanonicalUrl& url) { seen_.insert(url); }

  std::optional<int> next_depth() const;
  bool empty() const { return queue_.empty(); }
  std::size_t size() const { return queue_.size(); }
  std::size_t seen_count() const { return seen_.size(); }
  std::optional<int> max_depth() const { return max_depth_; }

 private:
  std::optional<int> max_depth_;
  std::deque<FrontierEntry> queue_;
  std::unordered_set<CanonicalUrl> seen_;
};

}  // namespace onioncrawl
