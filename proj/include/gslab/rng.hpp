#pragma once

#include <cstdint>
#include <initializer_list>

namespace gslab {

// Deterministic pseudo-random stream (xoshiro256++ seeded via splitmix64).
// The standard <random> distributions are implementation-defined, so uniform
// and normal draws are produced here directly; sequences are bit-identical
// across platforms and runs for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Child stream keyed by (seed, tags...). Used to give every image its own
  // augmentation stream: derive(pipeline_seed, {image_index, epoch}).
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). Requires n > 0.
  std::int64_t uniform_int(std::int64_t n);
  // Standard normal via Box-Muller; one spare value is cached.
  double normal();
  bool bernoulli(double p);

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// splitmix64 step, exposed for hash-style key mixing.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace gslab
