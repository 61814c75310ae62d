#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace imvc {

/// Deterministic random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Sub-streams are derived with a SplitMix64 finalizer over
/// (seed, stream id), so each module draws from its own reproducible
/// sequence. Uniform and normal variates are produced here rather than via
/// <random> distributions, whose algorithms vary between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream; same (seed, stream) always yields the same child.
  Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, cached second variate).
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  /// Fisher-Yates shuffle of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace imvc
