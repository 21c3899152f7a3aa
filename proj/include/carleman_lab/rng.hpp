#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "carleman_lab/grid.hpp"

namespace carleman_lab {

/// Counter-based stream built on the SplitMix64 output function.
///
/// The k-th 64-bit word of stream `key` is mix(key + (k + 1) * golden), i.e.
/// the k-th output of a SplitMix64 generator seeded with `key`, computed
/// directly from the counter. Any draw can be regenerated without replaying
/// the stream.
class CounterStream {
 public:
  static constexpr std::uint64_t golden = 0x9E3779B97F4A7C15ULL;

  explicit CounterStream(std::uint64_t key) : key_(key) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix(key_ + (counter + 1) * golden);
  }

  /// Uniform on the open interval (0, 1): 53 random bits centred in their cell.
  double uniform(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal by inverse-CDF transform of uniform(counter).
  double normal(std::uint64_t counter) const {
    static const boost::math::normal_distribution<double> standard(0.0, 1.0);
    return boost::math::quantile(standard, uniform(counter));
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

/// Seed of path `index` under `master_seed`.
inline std::uint64_t derive_path_seed(std::uint64_t master_seed, std::uint64_t index) {
  return CounterStream(CounterStream::mix(master_seed ^ 0x5851F42D4C957F2DULL)).bits(index);
}

/// Brownian increments ΔB_n ~ N(0, dt) on a uniform time grid.
struct SamplePath {
  std::uint64_t seed = 0;
  TimeGrid time;
  std::vector<double> increments;

  double terminal_value() const {
    double b = 0.0;
    for (double db : increments) b += db;
    return b;
  }
};

inline SamplePath sample_brownian(const TimeGrid& time, std::uint64_t seed) {
  SamplePath path;
  path.seed = seed;
  path.time = time;
  path.increments.resize(static_cast<std::size_t>(time.steps()));
  const CounterStream stream(seed);
  const double scale = std::sqrt(time.dt());
  for (int n = 0; n < time.steps(); ++n) {
    path.increments[static_cast<std::size_t>(n)] = scale * stream.normal(static_cast<std::uint64_t>(n));
  }
  return path;
}

inline SamplePath sample_brownian(double horizon, int steps, std::uint64_t seed) {
  return sample_brownian(TimeGrid(horizon, steps), seed);
}

/// All-zero increments; turns the stochastic solver into its deterministic part.
inline SamplePath zero_path(const TimeGrid& time) {
  SamplePath path;
  path.time = time;
  path.increments.assign(static_cast<std::size_t>(time.steps()), 0.0);
  return path;
}

}  // namespace carleman_lab
