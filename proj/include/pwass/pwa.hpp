#pragma once

#include "pwass/common.hpp"

#include <algorithm>
#include <utility>

namespace pwass {

inline void check_boundaries(const Vec& boundaries) {
  if (boundaries.size() < 2)
    throw StructuralError("boundaries need at least two entries");
  for (int i = 0; i + 1 < boundaries.size(); ++i)
    if (!(boundaries[i] < boundaries[i + 1]))
      throw StructuralError("boundaries must be strictly increasing");
}

/// Region index (0-based) of eta. Region i covers (l_i, l_{i+1}], with the
/// upper end closed; values below the first or above the last boundary clamp
/// to the outermost regions so the map is total.
inline int region_of(double eta, const Vec& boundaries) {
  const auto* begin = boundaries.data() + 1;
  const auto* end = boundaries.data() + boundaries.size();
  const auto* it = std::lower_bound(begin, end, eta);
  if (it == end) --it;
  return static_cast<int>(it - begin);
}

/// Scalar piecewise affine map f(eta): N_r affine pieces a_i*eta + b_i over
/// the half-open regions (l_i, l_{i+1}]. Immutable after construction.
struct PwaFunction {
  Vec boundaries;  // length N_r + 1, strictly increasing
  Vec slopes;      // length N_r
  Vec intercepts;  // length N_r

  int num_regions() const { return static_cast<int>(slopes.size()); }

  void validate() const {
    check_boundaries(boundaries);
    const int nr = num_regions();
    if (nr < 1) throw StructuralError("piecewise function needs >= 1 region");
    if (intercepts.size() != nr || boundaries.size() != nr + 1)
      throw StructuralError("piecewise function: inconsistent lengths");
  }
};

/// Intercepts b_1..b_{N_r} of a continuous piecewise affine function with
/// the given slopes and first intercept: adjacent pieces agree at every
/// interior boundary.
inline Vec intercepts_from_continuity(const Vec& slopes, double b1,
                                      const Vec& boundaries) {
  check_boundaries(boundaries);
  if (slopes.size() + 1 != boundaries.size())
    throw StructuralError("slopes length must be boundaries length - 1");
  Vec b(slopes.size());
  b[0] = b1;
  for (int i = 0; i + 1 < slopes.size(); ++i)
    b[i + 1] = b[i] + (slopes[i] - slopes[i + 1]) * boundaries[i + 1];
  return b;
}

/// Inverse convenience of intercepts_from_continuity: recover (slopes, b_1)
/// from the function values at the boundaries.
inline std::pair<Vec, double> knots_to_slopes(const Vec& knot_values,
                                              const Vec& boundaries) {
  check_boundaries(boundaries);
  if (knot_values.size() != boundaries.size())
    throw StructuralError("knot values length must equal boundaries length");
  Vec a(boundaries.size() - 1);
  for (int i = 0; i < a.size(); ++i)
    a[i] = (knot_values[i + 1] - knot_values[i]) /
           (boundaries[i + 1] - boundaries[i]);
  const double b1 = knot_values[0] - a[0] * boundaries[0];
  return {a, b1};
}

inline PwaFunction make_continuous_pwa(Vec boundaries, Vec slopes, double b1) {
  PwaFunction f;
  f.intercepts = intercepts_from_continuity(slopes, b1, boundaries);
  f.boundaries = std::move(boundaries);
  f.slopes = std::move(slopes);
  f.validate();
  return f;
}

inline PwaFunction make_pwa_from_knots(Vec boundaries, const Vec& knot_values) {
  auto [slopes, b1] = knots_to_slopes(knot_values, boundaries);
  return make_continuous_pwa(std::move(boundaries), std::move(slopes), b1);
}

inline double eval_pwa(double eta, const PwaFunction& pwa) {
  const int i = region_of(eta, pwa.boundaries);
  return pwa.slopes[i] * eta + pwa.intercepts[i];
}

/// f(l_i) at every boundary, evaluated with the piece above each boundary
/// clamped per region_of (closed upper ends, so f(l_0) uses piece 0).
inline Vec pwa_knot_values(const PwaFunction& pwa) {
  Vec k(pwa.boundaries.size());
  for (int i = 0; i < k.size(); ++i) k[i] = eval_pwa(pwa.boundaries[i], pwa);
  return k;
}

}  // namespace pwass
