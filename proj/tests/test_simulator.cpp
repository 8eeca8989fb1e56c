#include "pwass/simulator.hpp"

#include "pwass/pwa.hpp"
#include "pwass/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using pwass::Mat;
using pwass::Theta;
using pwass::ThetaVariant;
using pwass::Vec;

namespace {

/// Stable two-region system for deterministic checks.
pwass::PwassModel stable_model(double noise = 1e-30) {
  pwass::PwassModel m;
  m.phi_row = (Vec(2) << 0.4, 0.5).finished();
  m.phi_sub = (Vec(1) << -0.3).finished();
  m.f_block = Mat::Zero(0, 2);
  m.input_matrix = (Mat(2, 2) << 1.0, 0.0, 0.5, 1.0).finished();
  m.meas_matrix = Mat::Identity(2, 2);
  m.process_cov = noise * Mat::Identity(2, 2);
  m.meas_cov = noise * Mat::Identity(2, 2);
  m.prior_mean = (Vec(2) << 0.2, -0.1).finished();
  m.prior_cov = noise * Mat::Identity(2, 2);
  m.pwa = pwass::make_continuous_pwa((Vec(3) << -10.0, 0.5, 10.0).finished(),
                                     (Vec(2) << 0.2, -0.1).finished(), 0.3);
  m.validate();
  return m;
}

Mat gaussian_inputs(int nu, int T, std::uint64_t seed, double scale) {
  pwass::Rng rng(seed);
  Mat u(nu, T);
  for (int t = 0; t < T; ++t) u.col(t) = scale * rng.gaussian_vec(nu);
  return u;
}

}  // namespace

TEST_CASE("vanishing noise reproduces the deterministic recursion",
          "[simulator]") {
  const auto m = stable_model();
  const Theta theta = Theta::from_model(m, ThetaVariant::Continuous);
  const int T = 50;
  pwass::SimConfig sc;
  sc.horizon = T;
  sc.input_source = pwass::InputSource::File;
  sc.inputs = gaussian_inputs(2, T, 7, 0.5);
  pwass::Rng rng(1);
  const auto traj = pwass::simulate(m, theta, sc, rng);

  const auto submodels = pwass::assemble_all(m, theta);
  Vec x = m.prior_mean;
  bool saw_both = false;
  for (int t = 0; t < T; ++t) {
    CHECK(pwass::max_abs(traj.states.col(t) - x) < 1e-12);
    CHECK(pwass::max_abs(traj.measurements.col(t) - m.meas_matrix * x) <
          1e-12);
    const int r = pwass::region_of(x[0], m.pwa.boundaries);
    CHECK(traj.true_regimes[t] == r);
    if (r == 1) saw_both = true;
    x = submodels[r].A * x + m.input_matrix * sc.inputs.col(t) +
        submodels[r].b;
  }
  CHECK(saw_both);
}

TEST_CASE("the pitch row carries the piecewise-affine term", "[simulator]") {
  const auto m = stable_model();
  const Theta theta = Theta::from_model(m, ThetaVariant::Continuous);
  const int T = 40;
  pwass::SimConfig sc;
  sc.horizon = T;
  sc.input_source = pwass::InputSource::File;
  sc.inputs = gaussian_inputs(2, T, 11, 0.5);
  pwass::Rng rng(2);
  const auto traj = pwass::simulate(m, theta, sc, rng);

  for (int t = 0; t + 1 < T; ++t) {
    const double eta = traj.states(0, t);
    const double zeta = traj.states(1, t);
    const double expect = pwass::eval_pwa(eta, m.pwa) + m.phi_sub[0] * zeta +
                          (m.input_matrix * traj.inputs.col(t))[1];
    CHECK(traj.states(1, t + 1) == Catch::Approx(expect).margin(1e-12));
  }
}

TEST_CASE("true regimes label the simulated eta", "[simulator]") {
  const auto gs = pwass::gripen_model(pwass::NoiseReading::Variance);
  pwass::SimConfig sc = pwass::gripen_sim_config(300);
  pwass::Rng rng(3);
  const auto traj = pwass::simulate(gs.model, gs.theta, sc, rng);
  for (int t = 0; t < 300; ++t)
    CHECK(traj.true_regimes[t] ==
          pwass::region_of(traj.states(0, t), gs.model.pwa.boundaries));
}

TEST_CASE("the closed-loop schedule visits every region", "[simulator]") {
  const auto gs = pwass::gripen_model(pwass::NoiseReading::Variance);
  pwass::SimConfig sc = pwass::gripen_sim_config();
  pwass::Rng rng(4);
  const auto traj = pwass::simulate(gs.model, gs.theta, sc, rng);

  std::vector<int> counts(4, 0);
  for (int r : traj.true_regimes) ++counts[r];
  for (int i = 0; i < 4; ++i)
    CHECK(counts[i] >= static_cast<int>(0.10 * 1800));
  CHECK(traj.states.row(0).cwiseAbs().maxCoeff() < 50.0);
}

TEST_CASE("simulation is reproducible for a fixed seed", "[simulator]") {
  const auto gs = pwass::gripen_model(pwass::NoiseReading::Variance);
  pwass::SimConfig sc = pwass::gripen_sim_config(200);
  pwass::Rng r1(5), r2(5), r3(6);
  const auto a = pwass::simulate(gs.model, gs.theta, sc, r1);
  const auto b = pwass::simulate(gs.model, gs.theta, sc, r2);
  const auto c = pwass::simulate(gs.model, gs.theta, sc, r3);
  CHECK(pwass::max_abs(a.states - b.states) == 0.0);
  CHECK(pwass::max_abs(a.measurements - b.measurements) == 0.0);
  CHECK(pwass::max_abs(a.inputs - b.inputs) == 0.0);
  CHECK(a.true_regimes == b.true_regimes);
  CHECK(pwass::max_abs(a.states - c.states) > 0.0);
}

TEST_CASE("the open-loop plant escapes and is reported", "[simulator]") {
  const auto gs = pwass::gripen_model(pwass::NoiseReading::Variance);
  pwass::SimConfig sc = pwass::gripen_sim_config(1800);
  sc.input_source = pwass::InputSource::Excitation;
  pwass::Rng rng(7);
  try {
    pwass::simulate(gs.model, gs.theta, sc, rng);
    FAIL("expected NumericError");
  } catch (const pwass::NumericError& e) {
    CHECK(std::string(e.what()).find("unstable simulation") !=
          std::string::npos);
  }
}

TEST_CASE("the fighter model carries the published values", "[simulator]") {
  const auto var = pwass::gripen_model(pwass::NoiseReading::Variance);
  const auto& m = var.model;
  CHECK(m.phi_row[0] == 0.0241);
  CHECK(m.phi_row[1] == 2.174);
  CHECK(m.phi_sub[0] == -1.2616);
  CHECK(m.input_matrix(1, 0) == -31.0898);
  CHECK(m.input_matrix(1, 1) == 8.2557);
  CHECK(pwass::max_abs(m.meas_matrix - Mat::Identity(2, 2)) == 0.0);
  CHECK(pwass::max_abs(m.pwa.boundaries -
                       (Vec(5) << -1.0, 4.0, 7.0, 12.0, 16.0).finished()) ==
        0.0);
  CHECK(pwass::eval_pwa(7.0, m.pwa) == Catch::Approx(0.1260).margin(1e-12));
  CHECK(pwass::eval_pwa(-1.0, m.pwa) ==
        Catch::Approx(-0.3240).margin(1e-12));
  CHECK(m.process_cov(0, 0) == 0.06);
  CHECK(m.meas_cov(1, 1) == 0.6);
  CHECK(pwass::max_abs(m.prior_cov - m.process_cov) == 0.0);
  CHECK(pwass::max_abs(m.prior_mean) == 0.0);
  CHECK(var.theta.variant == ThetaVariant::Continuous);
  CHECK(pwass::max_abs(var.theta.slopes - m.pwa.slopes) == 0.0);

  // The default reading squares the magnitudes into covariances.
  const auto sd = pwass::gripen_model();
  CHECK(sd.model.process_cov(0, 0) == Catch::Approx(0.0036).margin(1e-18));
  CHECK(sd.model.meas_cov(0, 0) == Catch::Approx(0.36).margin(1e-16));
}

TEST_CASE("configuration validation rejects unusable setups", "[simulator]") {
  const auto m = stable_model(0.01);
  const Theta theta = Theta::from_model(m, ThetaVariant::Continuous);
  pwass::Rng rng(8);

  pwass::SimConfig short_run;
  short_run.horizon = 1;
  CHECK_THROWS_AS(pwass::simulate(m, theta, short_run, rng),
                  pwass::StructuralError);

  pwass::SimConfig no_file;
  no_file.horizon = 10;
  no_file.input_source = pwass::InputSource::File;
  CHECK_THROWS_AS(pwass::simulate(m, theta, no_file, rng),
                  pwass::StructuralError);

  pwass::SimConfig no_gain;
  no_gain.horizon = 10;
  no_gain.input_source = pwass::InputSource::Feedback;
  no_gain.reference_injection = Vec::Zero(2);
  CHECK_THROWS_AS(pwass::simulate(m, theta, no_gain, rng),
                  pwass::StructuralError);

  pwass::SimConfig no_injection;
  no_injection.horizon = 10;
  no_injection.input_source = pwass::InputSource::Excitation;
  CHECK_THROWS_AS(pwass::simulate(m, theta, no_injection, rng),
                  pwass::StructuralError);
}

TEST_CASE("the excitation schedule cycles through its targets",
          "[simulator]") {
  pwass::SimConfig sc;
  sc.horizon = 14;
  sc.reference_injection = (Vec(2) << 1.0, -2.0).finished();
  sc.schedule_targets = (Vec(3) << 0.5, -1.5, 2.5).finished();
  sc.dwell_steps = 2;
  sc.amplitude = 3.0;
  pwass::Rng rng(9);
  const Mat u = pwass::excitation_signal(sc, rng);
  REQUIRE(u.cols() == 14);
  for (int t = 0; t < 14; ++t) {
    const double ref = 3.0 * sc.schedule_targets[(t / 2) % 3];
    CHECK(u(0, t) == ref);
    CHECK(u(1, t) == -2.0 * ref);
  }

  // No targets and no dither: identically zero.
  pwass::SimConfig quiet = sc;
  quiet.schedule_targets = Vec();
  pwass::Rng rng2(9);
  CHECK(pwass::max_abs(pwass::excitation_signal(quiet, rng2)) == 0.0);
}

TEST_CASE("dither consumes one draw per step", "[simulator]") {
  pwass::SimConfig sc;
  sc.horizon = 7;
  sc.reference_injection = (Vec(1) << 1.0).finished();
  sc.schedule_targets = (Vec(1) << 1.0).finished();
  sc.dither = 0.25;

  pwass::Rng used(10);
  const Mat u = pwass::excitation_signal(sc, used);
  pwass::Rng fresh(10);
  for (int t = 0; t < 7; ++t) {
    const double g = fresh.gaussian();
    CHECK(u(0, t) == 1.0 + 0.25 * g);
  }
  CHECK(used.gaussian() == fresh.gaussian());
}

TEST_CASE("perturbation widths follow the parameter magnitudes",
          "[simulator]") {
  const auto gs = pwass::gripen_model();
  const Vec truth = gs.theta.pack();

  pwass::Rng rng(11);
  CHECK(pwass::max_abs(pwass::perturb_theta(gs.theta, 0.0, rng).pack() -
                       truth) == 0.0);

  pwass::Rng ra(12), rb(12);
  CHECK(pwass::max_abs(pwass::perturb_theta(gs.theta, 0.4, ra).pack() -
                       pwass::perturb_theta(gs.theta, 0.4, rb).pack()) == 0.0);

  const int dim = static_cast<int>(truth.size());
  Vec lo = Vec::Constant(dim, 1e300);
  Vec hi = Vec::Constant(dim, -1e300);
  pwass::Rng rc(13);
  for (int rep = 0; rep < 10000; ++rep) {
    const Vec d = pwass::perturb_theta(gs.theta, 0.4, rc).pack() - truth;
    lo = lo.cwiseMin(d);
    hi = hi.cwiseMax(d);
  }
  for (int k = 0; k < dim; ++k) {
    const double half = 0.2 * std::abs(truth[k]);
    CHECK(lo[k] >= -half - 1e-15);
    CHECK(hi[k] <= half + 1e-15);
    CHECK(lo[k] <= -0.9 * half);
    CHECK(hi[k] >= 0.9 * half);
  }
}

TEST_CASE("zero parameters perturb around the mean magnitude", "[simulator]") {
  auto gs = pwass::gripen_model();
  Theta theta = gs.theta;
  theta.phi_row[0] = 0.0;
  const Vec flat = theta.pack();
  const double mean_abs = flat.cwiseAbs().mean();
  const int k0 = 5;  // Phi1 in flat order a1..a4 b1 Phi1 Phi2 phi1
  REQUIRE(flat[k0] == 0.0);

  pwass::Rng rng(14);
  double widest = 0.0;
  for (int rep = 0; rep < 2000; ++rep) {
    const Vec d = pwass::perturb_theta(theta, 0.4, rng).pack() - flat;
    CHECK(std::abs(d[k0]) <= 0.2 * mean_abs + 1e-15);
    widest = std::max(widest, std::abs(d[k0]));
  }
  CHECK(widest >= 0.15 * mean_abs);
}

TEST_CASE("one-step residuals are standard after whitening", "[simulator]") {
  const auto gs = pwass::gripen_model(pwass::NoiseReading::Variance);
  const auto submodels = pwass::assemble_all(gs.model, gs.theta);
  pwass::SimConfig sc = pwass::gripen_sim_config(100);

  double sum = 0.0, sumsq = 0.0;
  long n = 0;
  for (int rep = 0; rep < 200; ++rep) {
    pwass::Rng rng(pwass::derive_seed(15, rep));
    const auto traj = pwass::simulate(gs.model, gs.theta, sc, rng);
    for (int t = 0; t + 1 < 100; ++t) {
      const int r = traj.true_regimes[t];
      const Vec pred = submodels[r].A * traj.states.col(t) +
                       gs.model.input_matrix * traj.inputs.col(t) +
                       submodels[r].b;
      const Vec e = traj.states.col(t + 1) - pred;
      for (int i = 0; i < 2; ++i) {
        const double z = e[i] / std::sqrt(gs.model.process_cov(i, i));
        sum += z;
        sumsq += z * z;
        ++n;
      }
    }
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) <= 0.05);
  CHECK(var >= 0.9);
  CHECK(var <= 1.1);
}
