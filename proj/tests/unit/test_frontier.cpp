#include <doctest.h>

#include <random>

#include "onioncrawl/frontier.hpp"

using namespace onioncrawl;

namespace {
CanonicalUrl page(int i) { return CanonicalUrl::parse("http://m.onion/p/" + std::to_string(i)); }
}  // namespace

TEST_SUITE("frontier") {

TEST_CASE("urls are enqueued once") {
  Frontier f;
  CHECK(f.enqueue(page(0), 0));
  CHECK_FALSE(f.enqueue(page(0), 0));
  CHECK_FALSE(f.enqueue(page(0), 3));
  CHECK(f.size() == 1);
  auto e = f.dequeue();
  REQUIRE(e);
  CHECK(e->url == page(0));
  CHECK(e->depth == 0);
  CHECK_FALSE(f.enqueue(page(0), 1));
  CHECK_FALSE(f.dequeue().has_value());
}

TEST_CASE("depth bound rejects deeper urls without marking them seen") {
  Frontier f(1);
  CHECK(f.enqueue(page(0), 0));
  CHECK(f.enqueue(page(1), 1));
  CHECK_FALSE(f.enqueue(page(2), 2));
  CHECK_FALSE(f.seen(page(2)));
  CHECK(f.max_depth() == 1);
}

TEST_CASE("mark_seen blocks later enqueues") {
  Frontier f;
  f.mark_seen(page(5));
  CHECK(f.seen(page(5)));
  CHECK_FALSE(f.enqueue(page(5), 1));
  CHECK(f.empty());
  CHECK(f.seen_count() == 1);
}

TEST_CASE("next_depth reports the head") {
  Frontier f;
  CHECK_FALSE(f.next_depth().has_value());
  f.enqueue(page(0), 0);
  f.enqueue(page(1), 1);
  CHECK(f.next_depth() == 0);
  f.dequeue();
  CHECK(f.next_depth() == 1);
}

TEST_CASE("a BFS driven through the frontier dequeues non-decreasing depths at minimal depth") {
  // Random graphs; the oracle is an independent BFS distance computation.
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    std::mt19937_64 rng(seed);
    const int n = 2 + static_cast<int>(rng() % 60);
    std::vector<std::vector<int>> adj(n);
    for (int v = 0; v < n; ++v) {
      const int deg = static_cast<int>(rng() % 4);
      for (int k = 0; k < deg; ++k) adj[v].push_back(static_cast<int>(rng() % n));
    }
    std::vector<int> dist(n, -1);
    dist[0] = 0;
    std::vector<int> order = {0};
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (int w : adj[order[i]]) {
        if (dist[w] < 0) {
          dist[w] = dist[order[i]] + 1;
          order.push_back(w);
        }
      }
    }

    Frontier f;
    f.enqueue(page(0), 0);
    int last = 0;
    std::size_t visited = 0;
    while (auto e = f.dequeue()) {
      CHECK(e->depth >= last);
      last = e->depth;
      const int v = std::stoi(e->url.path.substr(3));
      CHECK(e->depth == dist[v]);
      ++visited;
      for (int w : adj[v]) f.enqueue(page(w), e->depth + 1);
    }
    CHECK(visited == order.size());
  }
}

}  // TEST_SUITE
