#include "bam/rng.hpp"

namespace bam {

uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

Rng Rng::keyed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
  uint64_t s = mix64(seed + 0x9E3779B97F4A7C15ull);
  s = mix64(s ^ (a + 0xBF58476D1CE4E5B9ull));
  s = mix64(s ^ (b + 0x94D049BB133111EBull));
  s = mix64(s ^ (c + 0xD6E8FEB86659FD93ull));
  return Rng(s);
}

uint64_t Rng::next() {
  s_ += 0x9E3779B97F4A7C15ull;
  return mix64(s_);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

int64_t Rng::below(int64_t n) {
  // Lemire's multiply-shift rejection.
  uint64_t range = static_cast<uint64_t>(n);
  while (true) {
    uint64_t x = next();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * range;
    uint64_t low = static_cast<uint64_t>(m);
    if (low < range) {
      uint64_t threshold = (0 - range) % range;
      if (low < threshold) continue;
    }
    return static_cast<int64_t>(m >> 64);
  }
}

}  // namespace bam
