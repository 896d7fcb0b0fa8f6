#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mtmct {

/// Reproducible random source. The engine is MT19937-64 (fully specified by
/// the C++ standard); the conversions below are written out instead of using
/// <random> distributions, whose output differs between standard libraries.
///
///   uniform()    = (next() >> 11) * 2^-53                 in [0, 1)
///   normal()     = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)     one draw per call, no caching
///   below(n)     = next() % n
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mtmct
