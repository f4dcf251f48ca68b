#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "pbt/errors.hpp"

namespace pbt {

// splitmix64: the standard 64-bit mixer, used to derive independent stream
// seeds from (master seed, tag...) so that results do not depend on how work
// is scheduled across particles, runs, or worker threads.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, std::initializer_list<uint64_t> tags) {
  uint64_t s = splitmix64(master);
  for (uint64_t t : tags) s = splitmix64(s ^ (t + 0x9e3779b97f4a7c15ull));
  return s;
}

// Small deterministic generator (xoshiro-style state walk on splitmix64).
// We avoid std::uniform_* distributions: their outputs are not pinned by the
// standard, and reproducibility across toolchains matters here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64 in all
    // our uses, and determinism matters more than the ~n/2^64 bias.
    return n ? next_u64() % n : 0;
  }

  // Draw an index from an unnormalized weight vector by CDF walk.
  int next_categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) fail(ErrorCode::BadArgument, "categorical draw from all-zero weights");
    double r = next_double() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;  // r landed on accumulated rounding
  }

 private:
  uint64_t state_;
};

}  // namespace pbt
