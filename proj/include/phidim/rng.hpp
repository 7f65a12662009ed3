#pragma once

#include <cstdint>

namespace phidim {

// Counter-based deterministic randomness.  Every draw is a pure function of
// (seed, structural key, counter), so trees and percolation samples are
// identical for a given seed regardless of traversal or thread order.

inline uint64_t mix64(uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Key identifying a node by its path from the root.  child(i) derives the
// key of the i-th child; derivation is collision-resistant enough for
// simulation purposes and independent of sibling order.
struct PathKey {
  uint64_t h = 0x243f6a8885a308d3ULL;  // root

  PathKey child(uint64_t index) const {
    return PathKey{mix64(h ^ (0x100000001b3ULL * (index + 1)))};
  }
};

// A stream of draws attached to one (seed, key) pair.
class RngStream {
 public:
  RngStream(uint64_t seed, PathKey key) : base_(mix64(seed ^ mix64(key.h ^ 0x5bf0363546290f1bULL))) {}

  uint64_t next_u64() { return mix64(base_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  // uniform in [0,1) with 53 random bits
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return next_double() < p; }

 private:
  uint64_t base_;
  uint64_t counter_ = 0;
};

// One-shot uniform draw for a (seed, key) pair, for per-cell decisions.
inline double path_uniform(uint64_t seed, PathKey key) {
  return double(mix64(seed ^ mix64(key.h ^ 0x452821e638d01377ULL)) >> 11) * 0x1.0p-53;
}

}  // namespace phidim
