// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace slim {

// Counter-based generator built on the SplitMix64 finalizer. Every value is a
// pure function of (seed, stream, counter), so any language can reproduce the
// exact sequence:
//
//   key        = mix64(seed + kGolden * stream)
//   value(i)   = mix64(key + kGolden * (i + 1))        i = 0, 1, 2, ...
//   unit(i)    = (value(i) >> 40) / 2^24               float in [0, 1)
//   signed(i)  = unit(i) * 2 - 1                       float in [-1, 1)
//
// mix64 is the SplitMix64 output function (Steele, Lea, Flood 2014).
inline constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream)
      : key_(mix64(seed + kGolden * stream)) {}

  uint64_t next_u64() { return mix64(key_ + kGolden * (++counter_)); }

  // Float in [0, 1) using the top 24 bits, so the value is exact in f32.
  float next_unit() {
    return static_cast<float>(next_u64() >> 40) * 0x1p-24f;
  }

  // Float in [-1, 1).
  float next_signed() { return next_unit() * 2.0f - 1.0f; }

  // Double in [0, 1) using the top 53 bits.
  double next_unit_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1p-53;
  }

  // Uniform integer in [0, n), n >= 1. Modulo bias is irrelevant at the
  // n << 2^64 scales used here.
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace slim
