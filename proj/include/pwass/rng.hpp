#pragma once

#include "pwass/common.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace pwass {

/// splitmix64 finalizer. Used both as a bit mixer and to derive independent
/// child seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Child seed number `k` of `seed`. derive_seed(s, k) streams are
/// independent for distinct k and reproducible individually.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) {
  return splitmix64(seed + (k + 1) * 0x9e3779b97f4a7c15ULL);
}

/// Seeded random stream. Wraps mt19937_64 (whose output sequence is fixed by
/// the standard) and maps to doubles with explicit arithmetic, so the draw
/// sequence is identical on every platform. Normals use Box-Muller with a
/// fixed two-uniform cost per draw; nothing is cached.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1].
  double uniform_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal.
  double gaussian() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * M_PI * u2);
  }

  Vec gaussian_vec(int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = gaussian();
    return v;
  }

  /// Sample from N(mean, cov). cov must be SPD.
  Vec gaussian_mvn(const Vec& mean, const Mat& cov) {
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success)
      throw NumericError("mvn sample: covariance not positive definite");
    return mean + llt.matrixL() * gaussian_vec(static_cast<int>(mean.size()));
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace pwass
