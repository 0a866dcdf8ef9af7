#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace netexpr {

// Platform-stable random source. std::mt19937_64 output is fixed by the
// standard; the uniform and Gaussian transforms below are ours, so draws are
// bit-identical across standard libraries (std::normal_distribution is not).
class Rng {
public:
  static constexpr std::string_view kAlgorithmId = "mt19937_64+polar-gauss/v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer on [0, bound) by rejection, bound > 0.
  std::uint64_t uniform_index(std::uint64_t bound);

  // Standard normal via the Marsaglia polar method; the second variate of
  // each pair is cached.
  double gaussian();

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Seed for replica `index` of a sweep with base seed `base`.
constexpr std::uint64_t replica_seed(std::uint64_t base, std::uint64_t index) { return base ^ index; }

// splitmix64 finalizer; used where sub-streams must not collide with the
// parent stream (e.g. per-sample seeds derived from an experiment seed).
constexpr std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace netexpr
