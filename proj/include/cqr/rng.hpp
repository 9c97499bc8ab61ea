#pragma once

#include <cstdint>

#include "cqr/math.hpp"

namespace cqr::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t absorb(std::uint64_t h, std::uint64_t v) {
  return mix64((h ^ v) * 0x2545F4914F6CDD1Dull + kGolden);
}

// Stream purposes; keys are derived as (seed, id1, id2, purpose) so every
// (replication, use) pair gets an independent substream regardless of the
// execution schedule.
enum Purpose : std::uint64_t {
  kDgp = 1,
  kWeights = 2,
  kInstance = 3,
};

// Counter-based generator: the k-th output is mix64(key + k*golden), i.e. a
// SplitMix64 sequence addressed by counter instead of mutable global state.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  static Stream keyed(std::uint64_t seed, std::uint64_t id1, std::uint64_t id2 = 0,
                      std::uint64_t purpose = 0) {
    std::uint64_t h = mix64(seed + kGolden);
    h = absorb(h, id1);
    h = absorb(h, id2);
    h = absorb(h, purpose);
    return Stream(h);
  }

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

  // uniform on [0,1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform on the open interval (0,1); safe to feed into quantile functions
  double next_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double next_normal() { return norm_quantile(next_open()); }

  // uniform integer in [0, bound)
  std::uint64_t next_below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t id1,
                                 std::uint64_t id2 = 0, std::uint64_t purpose = 0) {
  std::uint64_t h = mix64(seed + kGolden);
  h = absorb(h, id1);
  h = absorb(h, id2);
  return absorb(h, purpose);
}

}  // namespace cqr::rng
