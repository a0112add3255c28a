#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace gramdiff {

// Combines two 64-bit values into a well-mixed seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Counter-based generator used for per-branch Gumbel noise. Cheap to construct
// from a seed, so every branch can own its own stream.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // Uniform on the open interval (0, 1).
  double uniform();

 private:
  std::uint64_t state_;
};

// Seeded run generator. Wraps mt19937_64 so every consumer draws from the same
// engine in a fixed order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on the open interval (0, 1).
  double uniform();
  double normal(double mean = 0.0, double stddev = 1.0);
  // Standard Gumbel draw -log(-log(u)).
  double gumbel();
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Fills `out` with independent standard Gumbel draws.
void fill_gumbel(SplitMix64& gen, std::span<double> out);
void fill_gumbel(Rng& rng, std::span<double> out);

}  // namespace gramdiff
