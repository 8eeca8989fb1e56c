#include "pwass/pwa.hpp"
#include "pwass/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

using pwass::Vec;

namespace {

const Vec kGripenBoundaries = (Vec(5) << -1.0, 4.0, 7.0, 12.0, 16.0).finished();
const Vec kGripenKnots =
    (Vec(5) << -0.3240, 0.0300, 0.1260, 0.9660, 1.3800).finished();
const Vec kGripenSlopes = (Vec(4) << 0.0708, 0.032, 0.168, 0.1035).finished();

}  // namespace

TEST_CASE("region_of follows the half-open convention", "[pwa]") {
  CHECK(pwass::region_of(5.0, kGripenBoundaries) == 1);
  CHECK(pwass::region_of(4.0, kGripenBoundaries) == 0);  // upper end closed
  CHECK(pwass::region_of(4.0 + 1e-12, kGripenBoundaries) == 1);
  CHECK(pwass::region_of(16.0, kGripenBoundaries) == 3);
}

TEST_CASE("region_of clamps outside the outer boundaries", "[pwa]") {
  CHECK(pwass::region_of(-50.0, kGripenBoundaries) == 0);
  CHECK(pwass::region_of(-1.0, kGripenBoundaries) == 0);
  CHECK(pwass::region_of(99.0, kGripenBoundaries) == 3);
}

TEST_CASE("intercepts_from_continuity reproduces the knot values", "[pwa]") {
  const double b1 = kGripenKnots[0] - kGripenSlopes[0] * kGripenBoundaries[0];
  const Vec b = pwass::intercepts_from_continuity(kGripenSlopes, b1,
                                                  kGripenBoundaries);
  pwass::PwaFunction f;
  f.boundaries = kGripenBoundaries;
  f.slopes = kGripenSlopes;
  f.intercepts = b;
  for (int i = 0; i < kGripenKnots.size(); ++i)
    CHECK(pwass::eval_pwa(kGripenBoundaries[i], f) ==
          Catch::Approx(kGripenKnots[i]).margin(1e-12));
}

TEST_CASE("equal slopes collapse to a single line", "[pwa]") {
  const Vec slopes = (Vec(2) << 0.7, 0.7).finished();
  const Vec bounds = (Vec(3) << -2.0, 1.0, 5.0).finished();
  const Vec b = pwass::intercepts_from_continuity(slopes, 3.25, bounds);
  CHECK(b[0] == 3.25);
  CHECK(b[1] == 3.25);
}

TEST_CASE("single region needs no continuity constraint", "[pwa]") {
  const Vec b = pwass::intercepts_from_continuity(
      (Vec(1) << 0.0).finished(), 5.0, (Vec(2) << 0.0, 1.0).finished());
  REQUIRE(b.size() == 1);
  CHECK(b[0] == 5.0);
}

TEST_CASE("non-increasing boundaries are rejected", "[pwa]") {
  const Vec bad = (Vec(3) << 0.0, 2.0, 2.0).finished();
  CHECK_THROWS_AS(pwass::intercepts_from_continuity(
                      (Vec(2) << 1.0, 2.0).finished(), 0.0, bad),
                  pwass::StructuralError);
  CHECK_THROWS_AS(pwass::check_boundaries((Vec(1) << 1.0).finished()),
                  pwass::StructuralError);
}

TEST_CASE("knots_to_slopes recovers the Gripen slopes", "[pwa]") {
  const auto [a, b1] = pwass::knots_to_slopes(kGripenKnots, kGripenBoundaries);
  REQUIRE(a.size() == 4);
  for (int i = 0; i < 4; ++i)
    CHECK(a[i] == Catch::Approx(kGripenSlopes[i]).margin(1e-12));
  CHECK(b1 == Catch::Approx(-0.2532).margin(1e-12));
}

TEST_CASE("knots_to_slopes on degenerate inputs", "[pwa]") {
  const auto [unit, b_unit] = pwass::knots_to_slopes(
      (Vec(2) << 0.0, 1.0).finished(), (Vec(2) << 0.0, 1.0).finished());
  CHECK(unit[0] == 1.0);
  CHECK(b_unit == 0.0);

  const auto [flat, b_flat] = pwass::knots_to_slopes(
      (Vec(3) << 4.5, 4.5, 4.5).finished(), (Vec(3) << -1.0, 0.0, 2.0).finished());
  CHECK(flat[0] == 0.0);
  CHECK(flat[1] == 0.0);
  CHECK(b_flat == 4.5);

  CHECK_THROWS_AS(pwass::knots_to_slopes((Vec(2) << 0.0, 1.0).finished(),
                                         (Vec(3) << 0.0, 1.0, 2.0).finished()),
                  pwass::StructuralError);
}

TEST_CASE("eval_pwa matches the Gripen knot list", "[pwa]") {
  const pwass::PwaFunction f =
      pwass::make_pwa_from_knots(kGripenBoundaries, kGripenKnots);
  CHECK(pwass::eval_pwa(-1.0, f) == Catch::Approx(-0.3240).margin(1e-12));
  CHECK(pwass::eval_pwa(16.0, f) == Catch::Approx(1.3800).margin(1e-12));
  CHECK(pwass::eval_pwa(1.5, f) == Catch::Approx(-0.1470).margin(1e-12));
  CHECK(pwass::eval_pwa(7.0, f) == Catch::Approx(0.1260).margin(1e-12));
}

TEST_CASE("continuity round trip over random functions", "[pwa]") {
  pwass::Rng rng(41);
  for (int rep = 0; rep < 200; ++rep) {
    const int nr = 1 + static_cast<int>(rng.uniform() * 6);
    Vec bounds(nr + 1);
    bounds[0] = rng.uniform(-10.0, 0.0);
    for (int i = 1; i <= nr; ++i)
      bounds[i] = bounds[i - 1] + rng.uniform(0.1, 5.0);
    Vec knots(nr + 1);
    for (int i = 0; i <= nr; ++i) knots[i] = rng.uniform(-20.0, 20.0);

    const pwass::PwaFunction f = pwass::make_pwa_from_knots(bounds, knots);
    const Vec back = pwass::pwa_knot_values(f);
    REQUIRE(back.size() == knots.size());
    for (int i = 0; i <= nr; ++i)
      CHECK(back[i] == Catch::Approx(knots[i]).margin(1e-12));

    // Adjacent pieces agree at every interior boundary.
    for (int i = 0; i + 1 < nr; ++i) {
      const double lhs = f.slopes[i] * bounds[i + 1] + f.intercepts[i];
      const double rhs = f.slopes[i + 1] * bounds[i + 1] + f.intercepts[i + 1];
      CHECK(lhs == Catch::Approx(rhs).margin(1e-12));
    }
  }
}
