#pragma once

#include <cstdint>

namespace bam {

// 64-bit avalanche mix (splitmix64 finalizer).
uint64_t mix64(uint64_t x);

// Splitmix64 stream. Streams built via keyed() are decorrelated for distinct
// keys, which makes per-particle randomness a pure function of
// (seed, slot, step) and therefore independent of thread count.
class Rng {
 public:
  explicit Rng(uint64_t state) : s_(state) {}
  static Rng keyed(uint64_t seed, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0);

  uint64_t next();
  double uniform();          // [0, 1), 53-bit
  int64_t below(int64_t n);  // uniform over [0, n), unbiased

  // UniformRandomBitGenerator, so standard/boost distributions can drive it.
  using result_type = uint64_t;
  static constexpr uint64_t min() { return 0; }
  static constexpr uint64_t max() { return ~0ull; }
  uint64_t operator()() { return next(); }

 private:
  uint64_t s_;
};

}  // namespace bam
