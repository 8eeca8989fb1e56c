#pragma once

#include "pwass/common.hpp"
#include "pwass/pwa.hpp"
#include "pwass/rng.hpp"

#include <cmath>

namespace pwass {

/// Standard normal CDF via the complementary error function (glibc erfc is
/// accurate to a couple of ulp, far below the 1e-12 contract).
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

/// Upper tail 1 - CDF, computed without cancellation.
inline double normal_sf(double x) { return 0.5 * std::erfc(x * M_SQRT1_2); }

/// Mass of N(mean, variance) on the interval (lo, hi). Uses the
/// complementary form when both endpoints sit in the upper tail.
inline double normal_interval_mass(double lo, double hi, double mean,
                                   double variance) {
  const double sd = std::sqrt(variance);
  const double za = (lo - mean) / sd;
  const double zb = (hi - mean) / sd;
  const double mass =
      za > 0.0 ? normal_sf(za) - normal_sf(zb) : normal_cdf(zb) - normal_cdf(za);
  return std::max(mass, 0.0);
}

/// Categorical distribution over regimes; weights live on the simplex.
struct RegionPosterior {
  Vec weights;

  int num_regimes() const { return static_cast<int>(weights.size()); }
};

/// Posterior probability of each region given a direct noisy measurement of
/// eta: weight_i is the mass of N(eta; y_eta, variance) over region i, with
/// the outer regions extended to -inf / +inf so the weights form a proper
/// categorical distribution (matching the clamped evaluation of the
/// piecewise function).
inline RegionPosterior region_posterior(double y_eta, double variance,
                                        const Vec& boundaries) {
  if (!(variance > 0.0))
    throw NumericError("region posterior needs positive variance");
  check_boundaries(boundaries);
  const int nr = static_cast<int>(boundaries.size()) - 1;
  const double sd = std::sqrt(variance);
  RegionPosterior post;
  post.weights.resize(nr);
  if (nr == 1) {
    post.weights[0] = 1.0;
    return post;
  }
  post.weights[0] = normal_cdf((boundaries[1] - y_eta) / sd);
  for (int i = 1; i + 1 < nr; ++i)
    post.weights[i] =
        normal_interval_mass(boundaries[i], boundaries[i + 1], y_eta, variance);
  post.weights[nr - 1] = normal_sf((boundaries[nr - 1] - y_eta) / sd);
  post.weights /= post.weights.sum();
  return post;
}

/// Inverse-CDF draw over the cumulative weights; deterministic given the
/// rng state and draw order.
inline int sample_categorical(const RegionPosterior& post, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  const int n = post.num_regimes();
  for (int i = 0; i < n; ++i) {
    cum += post.weights[i];
    if (u < cum) return i;
  }
  return n - 1;
}

/// Multivariate normal log-density via a Cholesky factorization of cov.
inline double log_gaussian(const Vec& x, const Vec& mean, const Mat& cov) {
  const auto n = x.size();
  if (mean.size() != n || cov.rows() != n || cov.cols() != n)
    throw StructuralError("log_gaussian: dimension mismatch");
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NumericError("log_gaussian: covariance not positive definite");
  const Vec w = llt.matrixL().solve(x - mean);
  double log_det = 0.0;
  for (int i = 0; i < n; ++i) log_det += std::log(llt.matrixL()(i, i));
  return -0.5 * n * std::log(2.0 * M_PI) - log_det - 0.5 * w.squaredNorm();
}

}  // namespace pwass
