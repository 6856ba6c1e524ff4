#pragma once

#include <cstdint>

namespace moco {

/// Deterministic pseudorandom generator (SplitMix64 core). The same seed
/// produces the same stream on every platform; substreams are derived by
/// mixing a stream id into the seed so independent modules can draw without
/// coordinating a shared cursor.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  /// Independent generator for substream `id` of this seed.
  Rng substream(uint64_t id) const;

  uint64_t next_u64();
  /// Uniform in [0, 1), 53-bit resolution.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (hand-rolled for portability).
  double normal();

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace moco
