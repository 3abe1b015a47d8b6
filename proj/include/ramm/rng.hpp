#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace ramm {

// Seeded RNG with hand-rolled distributions. std::mt19937_64 is specified
// bit-exactly by the standard, but the std distributions are not, so every
// draw here goes through our own code to keep runs reproducible across
// standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, n). n must be > 0.
  uint64_t below(uint64_t n);

  // Integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Double in [0, 1) with 53 random bits.
  double uniform_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform_real() < p; }

  // Standard normal via Box-Muller (no cached spare, keeps state minimal).
  double normal();

  // Derived stream for an independent sub-task.
  Rng child(uint64_t stream_id) const;

  // Engine state round-trip for checkpointing.
  std::string save_state() const;
  void load_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
  uint64_t initial_seed_ = 0;

  friend uint64_t rng_mix(uint64_t a, uint64_t b);
};

// splitmix64-style mixing, used to derive child seeds.
uint64_t rng_mix(uint64_t a, uint64_t b);

}  // namespace ramm
