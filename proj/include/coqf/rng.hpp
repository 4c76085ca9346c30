#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

#include "coqf/errors.hpp"

namespace coqf {

/// One SplitMix64 step.  Used to fold grid coordinates into per-trial seeds;
/// the recurrence is fully specified, so derived streams are stable across
/// platforms and standard libraries.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministically combines a master seed with a list of coordinates
/// (indices that identify a stream).  Extending a run with new coordinates
/// never disturbs the streams of existing ones.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> parts) {
  std::uint64_t state = master;
  std::uint64_t mixed = splitmix64(state);
  for (std::uint64_t part : parts) {
    state ^= part * 0x2545f4914f6cdd1dULL;
    mixed = splitmix64(state);
  }
  return mixed;
}

/// Deterministic uniform/normal source.  std::normal_distribution's algorithm
/// is implementation-defined, so Box-Muller is spelled out here to keep
/// streams identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1]; safe under log().
  double uniform_open01() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal(double mean, double sigma) {
    const double u1 = uniform_open01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * radius * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

/// Rejection sampler for a normal restricted to [lo, hi].  mean and sigma are
/// the parameters of the untruncated distribution.  Gives up after a million
/// rejections, far beyond anything a sane parameterization produces.
inline double truncated_normal(Rng& rng, double mean, double sigma, double lo,
                               double hi) {
  if (!(sigma >= 0.0)) throw ValidationError("truncated normal: negative sigma");
  if (!(lo <= hi)) throw ValidationError("truncated normal: empty interval");
  if (sigma == 0.0) {
    if (mean < lo || mean > hi) {
      throw ValidationError("truncated normal: zero-variance mean outside interval");
    }
    return mean;
  }
  constexpr int kMaxRejections = 1'000'000;
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const double draw = rng.normal(mean, sigma);
    if (draw >= lo && draw <= hi) return draw;
  }
  throw ValidationError("truncated normal: rejection sampling did not accept");
}

}  // namespace coqf
