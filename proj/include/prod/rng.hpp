#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace prod::rng {

// Counter-based generator built on the splitmix64 finalizer. A stream is a
// 64-bit key; drawing advances a local counter only, and child streams are
// derived by hashing (key, label), so samplers split per (prompt, draw) are
// order-independent across streams and reproducible within one.

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline constexpr uint64_t mix64(uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

inline constexpr uint64_t combine(uint64_t key, uint64_t word) {
  return mix64((key + kGolden) ^ mix64(word + kGolden));
}

inline uint64_t hash_bytes(std::string_view s, uint64_t seed = 0) {
  uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;  // FNV-1a step
  }
  return mix64(h);
}

class Stream {
 public:
  explicit Stream(uint64_t key) : key_(key) {}

  static Stream root(uint64_t seed) { return Stream(mix64(seed + kGolden)); }

  Stream fork(uint64_t label) const { return Stream(combine(key_, label)); }
  Stream fork(std::string_view label) const { return Stream(combine(key_, hash_bytes(label))); }

  uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

  // Uniform on [0, 1): 53 random mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]: safe as a log() argument.
  double next_open_double() { return 1.0 - next_double(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Box-Muller; consumes two uniforms per call, no cached spare.
  double normal() {
    const double u1 = next_open_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double sign() { return (next_u64() & 1) ? 1.0 : -1.0; }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    // Rejection sampling on the top bits keeps the draw unbiased.
    const uint64_t threshold = (~uint64_t{0} - n + 1) % n;
    for (;;) {
      const uint64_t x = next_u64();
      if (x >= threshold) return x % n;
    }
  }

  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace prod::rng
