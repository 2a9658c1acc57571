// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <vector>

#include "mbnsep/util.hpp"

namespace mbnsep {

// All randomized stages draw from streams derived from (master seed, path),
// e.g. (seed, layer, clustering index). Every distribution below is written
// out explicitly so the byte stream does not depend on the C++ standard
// library implementation.
namespace detail {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class RngStream {
 public:
  explicit RngStream(uint64_t seed) : eng_(seed) {}

  uint64_t u64() { return eng_(); }

  // Unbiased integer in [0, n) via rejection.
  uint64_t below(uint64_t n) {
    require(n > 0, "RngStream::below: empty range");
    const uint64_t limit = (~uint64_t{0}) - (~uint64_t{0}) % n;
    uint64_t r;
    do {
      r = eng_();
    } while (r >= limit);
    return r % n;
  }

  // Uniform in [0, 1) with 53 random bits.
  double real01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Box-Muller; one spare value cached between calls.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = real01();
    double u2 = real01();
    while (u1 <= 0.0) u1 = real01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  // k distinct indices from [0, n), uniform without replacement
  // (partial Fisher-Yates; order of the draws is preserved).
  std::vector<uint32_t> sample_without_replacement(uint64_t n, uint64_t k) {
    require(k <= n, "sample_without_replacement: k=", k, " exceeds n=", n);
    std::vector<uint32_t> pool(n);
    for (uint64_t i = 0; i < n; ++i) pool[i] = static_cast<uint32_t>(i);
    std::vector<uint32_t> out(k);
    for (uint64_t i = 0; i < k; ++i) {
      const uint64_t j = i + below(n - i);
      std::swap(pool[i], pool[j]);
      out[i] = pool[i];
    }
    return out;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline RngStream derive_stream(uint64_t seed, std::initializer_list<uint64_t> path) {
  uint64_t state = seed ^ 0xa5a5a5a55a5a5a5aULL;
  uint64_t mixed = detail::splitmix64(state);
  for (uint64_t p : path) {
    state ^= p + 0x9e3779b97f4a7c15ULL + (state << 6) + (state >> 2);
    mixed ^= detail::splitmix64(state);
  }
  return RngStream(mixed);
}

}  // namespace mbnsep
