#pragma once

#include <cstdint>

namespace slam {

// SplitMix64-based counter RNG.  Every consumer of randomness draws from a
// substream keyed by (seed, phase, context, row), so row-parallel execution
// produces bit-identical results to any sequential order.

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum : std::uint64_t {
  kPhaseInitA = 1,
  kPhaseInitQ = 2,
  kPhasePerturbA = 3,
  kPhasePerturbQ = 4,
  kPhaseSweepA = 5,
  kPhaseSweepQ = 6,
  kPhaseGenAttr = 7,
  kPhaseGenResp = 8,
  kPhaseGenMiss = 9,
  kPhaseCvFolds = 10,
  kPhaseRepSeed = 11,
};

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t stream_seed) : state_(stream_seed) {}

  std::uint64_t next_u64() {
    counter_ += kGoldenGamma;
    return mix64(state_ + counter_);
  }

  // Uniform in [0, 1).
  double next_unit() { return (next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return next_unit() < p; }

  std::uint8_t fair_bit() { return static_cast<std::uint8_t>(next_u64() >> 63); }

  // Uniform integer in [0, n); n must be positive.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t state_;
  std::uint64_t counter_ = 0;
};

inline CounterRng substream(std::uint64_t seed, std::uint64_t phase,
                            std::uint64_t ctx, std::uint64_t row) {
  std::uint64_t s = mix64(seed + kGoldenGamma);
  s = mix64(s ^ (phase * 0xd6e8feb86659fd93ULL));
  s = mix64(s ^ (ctx * 0xc2b2ae3d27d4eb4fULL));
  s = mix64(s ^ (row * kGoldenGamma));
  return CounterRng(s);
}

// Splittable per-replication seed derivation.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return substream(seed, kPhaseRepSeed, index, 0).next_u64();
}

}  // namespace slam
