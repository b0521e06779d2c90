#pragma once

// Deterministic random number generation. Every draw routine here is written
// out explicitly (no std::*_distribution) so that streams are bit-identical
// across platforms and standard library versions. The engine is std::mt19937_64,
// whose output sequence is fixed by the C++ standard.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

#include <Eigen/Core>

namespace lazylab {

/// Generator identity, documented in the README and experiment manifests.
inline constexpr const char* kRngAlgorithm =
    "mt19937_64 + 53-bit uniforms + polar-method gaussians";

/// splitmix64 finalizer; used only for deriving substream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Combines a base seed with any number of stream labels into a fresh seed.
/// Distinct label tuples give statistically independent substreams.
template <class... Parts>
std::uint64_t derive_seed(std::uint64_t seed, Parts... parts) {
  std::uint64_t s = splitmix64(seed ^ 0xa0761d6478bd642fULL);
  ((s = splitmix64(s ^ static_cast<std::uint64_t>(parts))), ...);
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  /// Uniform on [0,1) with 53 random bits (exactly representable doubles).
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo,hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via the Marsaglia polar method (one spare cached).
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double mul = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * mul;
    has_spare_ = true;
    return u * mul;
  }

  /// +1 or -1 with equal probability.
  double rademacher() { return (eng_() >> 63) ? 1.0 : -1.0; }

  /// Uniform point on the unit sphere S^{d-1} (normalized gaussian vector;
  /// the measure-zero near-zero draw is resampled).
  Eigen::VectorXd sphere(int d) {
    if (d < 1) throw std::invalid_argument("sphere: d must be >= 1");
    Eigen::VectorXd v(d);
    double norm = 0.0;
    do {
      for (int i = 0; i < d; ++i) v[i] = gaussian();
      norm = v.norm();
    } while (norm < 1e-12);
    return v / norm;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lazylab
