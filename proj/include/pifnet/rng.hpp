#pragma once

#include <cstdint>
#include <random>

namespace pifnet {

/// Seeded pseudo-random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. All conversions to doubles and integers are done here rather
/// than through <random> distributions, whose algorithms are implementation
/// defined, so a given seed produces the same values on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform in [lo, hi). Requires lo < hi.
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). Requires n > 0.
  std::uint64_t below(std::uint64_t n);

  /// Uniform integer in [lo, hi], inclusive.
  std::int64_t integer(std::int64_t lo, std::int64_t hi);

  /// Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  /// Independent stream keyed by (seed, stream).
  Rng derive(std::uint64_t stream) const { return Rng(mix(seed_, stream)); }

  /// splitmix64 finalizer over seed ^ golden-ratio-scaled stream id.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// Well-known stream ids so independent consumers never share draws.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kData = 2;
inline constexpr std::uint64_t kSubset = 3;
inline constexpr std::uint64_t kSynthSample = 4;
inline constexpr std::uint64_t kGradcheck = 5;
}  // namespace streams

}  // namespace pifnet
