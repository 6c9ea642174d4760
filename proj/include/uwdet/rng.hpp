#pragma once

#include <cstdint>

#include "uwdet/errors.hpp"

namespace uwdet {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer. Pure, platform-independent.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

// Hash a (seed, a, b) key into a fresh substream seed. Used to split
// independent per-layer / per-node streams without sharing mutable state.
constexpr std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t h = mix64(seed + kGoldenGamma);
  h = mix64(h ^ (a + kGoldenGamma));
  h = mix64(h ^ (b + kGoldenGamma));
  return h;
}

// Counter-based splitmix64 stream: output i is mix64(seed + golden * i).
// Identical seed + call sequence reproduces bit-identically on every
// platform. The position counter makes streams cheap to snapshot.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return pos_; }

  std::uint64_t next_u64() { return mix64(seed_ + kGoldenGamma * ++pos_); }

  // Uniform in [0, 1), 53 mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double next_in(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Unbiased uniform integer in [0, n) by rejection.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw ContractError("RngStream::next_below: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

private:
  std::uint64_t seed_;
  std::uint64_t pos_ = 0;
};

}  // namespace uwdet
