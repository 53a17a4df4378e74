#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace tunedemand {

/// The one random stream type used across the library.
///
/// Seeded through SplitMix64 so that nearby seeds give unrelated streams.
/// `split(k)` derives a child stream from the construction seed and `k` only,
/// never from the parent's consumed state, so chain k of a run is the same
/// no matter how many draws the parent has made.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::uint64_t stream) const;
  std::uint64_t seed() const noexcept { return seed_; }

  static constexpr result_type min() { return std::numeric_limits<result_type>::min(); }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform();
  double normal(double mean = 0.0, double sd = 1.0);
  /// Shape / rate parameterization, mean shape / rate.
  double gamma(double shape, double rate);
  double beta(double a, double b);
  double chi_squared(double dof);
  std::int64_t poisson(double mean);
  /// Mean `mean`, variance mean + mean^2 / dispersion (Gamma-Poisson mixture).
  std::int64_t negative_binomial(double mean, double dispersion);
  /// Uniform integer on [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace tunedemand
