#pragma once

#include <cstdint>
#include <random>

namespace mrp {

/// Seeded random stream. There is no global generator anywhere in the
/// library; every stochastic operation takes one of these explicitly.
///
/// Substreams are derived by hashing (seed, index) so that work split across
/// hypotheses, samplings or scenes draws the same numbers regardless of the
/// order in which the pieces are executed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    return Rng(mix(seed ^ mix(index + 0x632be59bd9b4e019ULL)));
  }
  static Rng substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return substream(mix(seed ^ mix(a + 0x9e3779b97f4a7c15ULL)), b);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  std::mt19937_64& engine() { return engine_; }

  /// splitmix64 finalizer.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mrp
