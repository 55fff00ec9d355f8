#pragma once

#include <cstdint>

namespace testgen {

// splitmix64; small, seedable, no library distribution quirks
struct Rng {
  std::uint64_t s;
  explicit Rng(std::uint64_t seed) : s(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  std::uint64_t below(std::uint64_t n) { return next() % n; }
  std::uint32_t range(std::uint32_t lo, std::uint32_t hi) { return lo + static_cast<std::uint32_t>(below(hi - lo + 1)); }
  bool coin(double p) { return double(next() >> 11) * 0x1.0p-53 < p; }
};

}  // namespace testgen
