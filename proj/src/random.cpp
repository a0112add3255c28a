#include "gramdiff/random.hpp"

#include <cmath>

namespace gramdiff {

namespace {

double to_open_unit(std::uint64_t bits) {
  // 53 random mantissa bits, shifted half a step off zero.
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return to_open_unit(next()); }

double Rng::uniform() { return to_open_unit(engine_()); }

double Rng::normal(double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  return dist(engine_);
}

double Rng::gumbel() { return -std::log(-std::log(uniform())); }

void fill_gumbel(SplitMix64& gen, std::span<double> out) {
  for (double& g : out) g = -std::log(-std::log(gen.uniform()));
}

void fill_gumbel(Rng& rng, std::span<double> out) {
  for (double& g : out) g = rng.gumbel();
}

}  // namespace gramdiff
