#pragma once

#include "pwass/common.hpp"
#include "pwass/model.hpp"
#include "pwass/pwa.hpp"
#include "pwass/rng.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace pwass {

/// How listed noise magnitudes are interpreted when building covariances.
enum class NoiseReading { Stddev, Variance };

enum class InputSource { File, Excitation, Feedback };

/// Simulation setup. The builtin excitation cycles a scalar reference
/// through schedule_targets (dwell_steps each, scaled by amplitude, plus
/// optional Gaussian dither) and injects it as reference_injection * ref.
/// Under Feedback the applied input is that feedforward minus
/// feedback_gain * x_t; under Excitation the feedforward alone; under File
/// the columns of `inputs`.
struct SimConfig {
  int horizon = 2;
  double sample_time = 1.0 / 60.0;
  std::uint64_t seed = 0;
  InputSource input_source = InputSource::Excitation;
  Mat feedback_gain;        // n_u x n_x, required for Feedback
  Vec reference_injection;  // n_u, required for Excitation/Feedback
  Vec schedule_targets;
  int dwell_steps = 100;
  double amplitude = 1.0;
  double dither = 0.0;
  Mat inputs;  // n_u x horizon, required for File

  void validate(int nx, int nu) const {
    if (horizon < 2) throw StructuralError("horizon must be >= 2");
    if (!(sample_time > 0.0))
      throw StructuralError("sample_time must be positive");
    if (dwell_steps < 1) throw StructuralError("dwell_steps must be >= 1");
    if (input_source == InputSource::File) {
      if (inputs.rows() != nu || inputs.cols() < horizon)
        throw StructuralError("file input series must be n_u x horizon");
      return;
    }
    if (reference_injection.size() != nu)
      throw StructuralError("reference injection must have length n_u");
    if (input_source == InputSource::Feedback &&
        (feedback_gain.rows() != nu || feedback_gain.cols() != nx))
      throw StructuralError("feedback gain must be n_u x n_x");
  }
};

/// One simulated run. Column t of each matrix is time t (0-based); inputs
/// under Feedback include the feedback term. true_regimes[t] is the region
/// of the noiseless simulated eta at time t.
struct Trajectory {
  Mat states;        // n_x x T
  Mat measurements;  // n_y x T
  Mat inputs;        // n_u x T
  std::vector<int> true_regimes;
};

/// Feedforward input series of the builtin schedule. Consumes one Gaussian
/// draw per time step when dither is nonzero, none otherwise.
inline Mat excitation_signal(const SimConfig& config, Rng& rng) {
  const int nu = static_cast<int>(config.reference_injection.size());
  if (nu < 1)
    throw StructuralError("reference injection must have length n_u");
  const int T = config.horizon;
  const int nt = static_cast<int>(config.schedule_targets.size());
  Mat u(nu, T);
  for (int t = 0; t < T; ++t) {
    double ref = nt == 0 ? 0.0
                         : config.amplitude *
                               config.schedule_targets[(t / config.dwell_steps) %
                                                       nt];
    if (config.dither != 0.0) ref += config.dither * rng.gaussian();
    u.col(t) = config.reference_injection * ref;
  }
  return u;
}

/// Simulates the model forward under theta_true. Draw order is fixed:
/// dither draws of the feedforward, the initial state, then per time step
/// the measurement noise followed by the process noise. Throws when the
/// state leaves the +-1e6 box; an open-loop unstable model needs
/// InputSource::Feedback.
inline Trajectory simulate(const PwassModel& model, const Theta& theta_true,
                           const SimConfig& config, Rng& rng) {
  model.validate();
  const int nx = model.state_dim();
  const int ny = model.meas_dim();
  const int nu = model.input_dim();
  config.validate(nx, nu);
  const int T = config.horizon;
  const auto submodels = assemble_all(model, theta_true);

  Mat u_ff;
  if (config.input_source == InputSource::File)
    u_ff = config.inputs.leftCols(T);
  else
    u_ff = excitation_signal(config, rng);

  Trajectory traj;
  traj.states.resize(nx, T);
  traj.measurements.resize(ny, T);
  traj.inputs.resize(nu, T);
  traj.true_regimes.resize(T);

  const Eigen::LLT<Mat> chol_q(model.process_cov);
  const Eigen::LLT<Mat> chol_r(model.meas_cov);

  Vec x = rng.gaussian_mvn(model.prior_mean, model.prior_cov);
  for (int t = 0; t < T; ++t) {
    traj.states.col(t) = x;
    const int regime = region_of(x[0], model.pwa.boundaries);
    traj.true_regimes[t] = regime;
    traj.measurements.col(t) =
        model.meas_matrix * x + chol_r.matrixL() * rng.gaussian_vec(ny);
    Vec u = u_ff.col(t);
    if (config.input_source == InputSource::Feedback)
      u -= config.feedback_gain * x;
    traj.inputs.col(t) = u;
    if (t + 1 < T) {
      x = submodels[regime].A * x + model.input_matrix * u +
          submodels[regime].b + chol_q.matrixL() * rng.gaussian_vec(nx);
      if (x.cwiseAbs().maxCoeff() > 1e6)
        throw NumericError(
            "unstable simulation: state exceeded 1e6 at t=" +
            std::to_string(t + 2) +
            "; consider the Feedback input source with a stabilizing gain");
    }
  }
  return traj;
}

/// Uniform perturbation of each flat parameter within an interval of width
/// fraction * |entry| centered at the entry; exact-zero entries fall back
/// to fraction * (mean absolute entry) for the width.
inline Theta perturb_theta(const Theta& theta_true, double fraction,
                           Rng& rng) {
  if (fraction < 0.0)
    throw StructuralError("perturbation fraction must be >= 0");
  Vec flat = theta_true.pack();
  const double mean_abs = flat.cwiseAbs().mean();
  for (int k = 0; k < flat.size(); ++k) {
    const double base = flat[k] != 0.0 ? std::abs(flat[k]) : mean_abs;
    const double half = 0.5 * fraction * base;
    flat[k] += rng.uniform(-half, half);
  }
  return Theta::unpack(flat, theta_true.state_dim(),
                       theta_true.num_regimes(), theta_true.variant);
}

struct GripenSystem {
  PwassModel model;
  Theta theta;
};

/// JAS 39 Gripen longitudinal short-period model: state [eta, zeta] in
/// degrees, elevator/canard inputs, identity measurement matrix, and a
/// four-piece continuous aerodynamic term f(eta). Magnitudes 0.06 and 0.6
/// from the source system are read as standard deviations by default.
inline GripenSystem gripen_model(NoiseReading reading = NoiseReading::Stddev) {
  const double q = reading == NoiseReading::Stddev ? 0.06 * 0.06 : 0.06;
  const double r = reading == NoiseReading::Stddev ? 0.6 * 0.6 : 0.6;

  PwassModel m;
  m.phi_row = (Vec(2) << 0.0241, 2.174).finished();
  m.phi_sub = (Vec(1) << -1.2616).finished();
  m.f_block = Mat::Zero(0, 2);
  m.input_matrix =
      (Mat(2, 2) << 0.3043, 0.0289, -31.0898, 8.2557).finished();
  m.meas_matrix = Mat::Identity(2, 2);
  m.process_cov = q * Mat::Identity(2, 2);
  m.meas_cov = r * Mat::Identity(2, 2);
  m.prior_mean = Vec::Zero(2);
  m.prior_cov = q * Mat::Identity(2, 2);
  const Vec boundaries = (Vec(5) << -1.0, 4.0, 7.0, 12.0, 16.0).finished();
  const Vec knots = (Vec(5) << -0.3240, 0.0300, 0.1260, 0.9660, 1.3800)
                        .finished();
  m.pwa = make_pwa_from_knots(boundaries, knots);
  m.validate();

  GripenSystem sys;
  sys.theta = Theta::from_model(m, ThetaVariant::Continuous);
  sys.model = std::move(m);
  return sys;
}

/// Closed-loop simulation setup for the Gripen model. The gain applies the
/// smallest pitch-row correction that keeps every regime's closed-loop
/// spectral radius below 0.95; identification treats the logged input as
/// exogenous, and the weaker the feedback component the smaller the bias
/// that assumption causes. The dither keeps the reference persistently
/// exciting, and the schedule settles eta at two points inside each region.
inline SimConfig gripen_sim_config(int horizon = 1800,
                                   std::uint64_t seed = 0) {
  SimConfig c;
  c.horizon = horizon;
  c.sample_time = 1.0 / 60.0;
  c.seed = seed;
  c.input_source = InputSource::Feedback;
  c.feedback_gain = (Mat(2, 2) << -0.000593132551817231, 0.004758617730007956,
                     0.006245336869134375, -0.05010544551008379)
                        .finished();
  c.reference_injection =
      (Vec(2) << -0.006211989699118286, 0.06540859742012786).finished();
  c.schedule_targets =
      (Vec(8) << 1.177235, 3.568843, 5.488168, 6.690198, 8.962372, 11.139762,
       13.612976, 15.006292)
          .finished();
  c.dwell_steps = 100;
  c.amplitude = 1.0;
  c.dither = 1.5;
  return c;
}

}  // namespace pwass
