#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace ddppo {

// Seeded generator with platform-independent derived distributions.
//
// std::uniform_real_distribution and friends are implementation-defined, so
// every draw used by training goes through the conversions below instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling removes modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller (one draw per call, no caching).
  double normal();

  std::string serialize() const;
  void deserialize(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

// Mixes a base seed with stream ids so ranks and subsystems get independent
// generators (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                          std::uint64_t substream = 0);

}  // namespace ddppo
