#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>

namespace onioncrawl {

// mt19937_64 output is fixed by the standard; distributions are not, so
// bounded draws go through uniform_index to keep golden sequences portable.
using Rng = std::mt19937_64;

// Unbiased draw from [0, bound) by rejection. bound must be > 0.
inline std::size_t uniform_index(Rng& rng, std::size_t bound) {
  const std::uint64_t n = bound;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % n);
}

}  // namespace onioncrawl
