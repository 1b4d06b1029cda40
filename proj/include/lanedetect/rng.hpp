#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace lanedetect {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed for a named sub-stream, e.g. derive_seed(seed, {kShuffleStream, epoch}).
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

/// Deterministic generator built on std::mt19937_64.
///
/// The engine is fully specified by the standard; the conversions to uniform
/// and normal variates are implemented here so sequences do not depend on the
/// standard library's distribution classes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fixed identifiers for the sub-streams drawn from a run seed.
enum RngStream : std::uint64_t {
  kInitStream = 1,
  kShuffleStream = 2,
  kDropoutStream = 3,
  kAugmentStream = 4,
  kSplitStream = 5,
};

}  // namespace lanedetect
