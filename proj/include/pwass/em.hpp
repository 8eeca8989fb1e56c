#pragma once

#include "pwass/common.hpp"
#include "pwass/gaussian.hpp"
#include "pwass/model.hpp"
#include "pwass/parallel.hpp"
#include "pwass/rng.hpp"
#include "pwass/smoother.hpp"
#include "pwass/stats.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace pwass {

/// Natural parameter of regime i's transition density, stacked as
/// [A_i' Q^-1; b_i' Q^-1; -1/2 A_i' Q^-1 A_i; -(B u_prev + b_i)' Q^-1 A_i],
/// a (2 n_x + 2) x n_x matrix pairing with stacked_stat().
inline Mat natural_parameter(const PwassModel& model, const Theta& theta,
                             int regime, const Vec& u_prev) {
  const Submodel s = assemble_submodel(model, theta, regime);
  const int nx = theta.state_dim();
  const Mat Qi = model.process_cov.llt().solve(Mat::Identity(nx, nx));
  Mat psi(2 * nx + 2, nx);
  psi.topRows(nx) = s.A.transpose() * Qi;
  psi.row(nx) = (Qi * s.b).transpose();
  psi.middleRows(nx + 1, nx) = -0.5 * s.A.transpose() * Qi * s.A;
  psi.row(2 * nx + 1) =
      -(model.input_matrix * u_prev + s.b).transpose() * Qi * s.A;
  return psi;
}

/// The parameter-dependent constant of the same density,
/// -u_prev' B' Q^-1 b_i - 1/2 b_i' Q^-1 b_i.
inline double log_partition(const PwassModel& model, const Theta& theta,
                            int regime, const Vec& u_prev) {
  const Submodel s = assemble_submodel(model, theta, regime);
  const Vec qb = model.process_cov.llt().solve(s.b);
  return -u_prev.dot(model.input_matrix.transpose() * qb) -
         0.5 * s.b.dot(qb);
}

/// Statistics of one block stacked to pair with natural_parameter:
/// [sum E[x_{t-1} x_t']; sum E[x_t]'; sum E[x_{t-1} x_{t-1}']; sum E[x_{t-1}]'].
inline Mat stacked_stat(const StatBlock& blk) {
  const int nx = static_cast<int>(blk.mean_curr.size());
  Mat s(2 * nx + 2, nx);
  s.topRows(nx) = blk.cross;
  s.row(nx) = blk.mean_curr.transpose();
  s.middleRows(nx + 1, nx) = blk.autom;
  s.row(2 * nx + 1) = blk.mean_prev.transpose();
  return s;
}

namespace detail {

/// Everything the surrogate and its derivatives need that does not depend
/// on theta; built once per M-step.
struct QWorkspace {
  std::vector<RegimeAggregate> agg;
  Mat Qi;   // process-noise precision
  Mat QiB;  // Qi * B
  int num_samples = 0;
};

inline QWorkspace make_q_workspace(const PwassModel& model,
                                   const SufficientStats& stats,
                                   const Mat& U) {
  if (stats.num_samples < 1)
    throw StructuralError("statistics hold no samples");
  if (stats.state_dim != model.state_dim() ||
      stats.num_regimes != model.num_regimes())
    throw StructuralError("statistics do not match the model dimensions");
  if (U.cols() < stats.horizon - 1)
    throw StructuralError("input series shorter than horizon - 1");
  QWorkspace w;
  w.agg = aggregate_by_regime(stats, U);
  const int nx = model.state_dim();
  w.Qi = model.process_cov.llt().solve(Mat::Identity(nx, nx));
  w.QiB = w.Qi * model.input_matrix;
  w.num_samples = stats.num_samples;
  return w;
}

inline double q_value_core(const PwassModel& model, const Theta& theta,
                           const QWorkspace& w) {
  const auto submodels = assemble_all(model, theta);
  double total = 0.0;
  for (int i = 0; i < theta.num_regimes(); ++i) {
    const RegimeAggregate& a = w.agg[i];
    if (a.count == 0.0) continue;
    const Mat& A = submodels[i].A;
    const Vec& b = submodels[i].b;
    const Mat QiA = w.Qi * A;
    const Vec Qib = w.Qi * b;
    total += (QiA * a.cross).trace();
    total += a.mean_curr.dot(Qib);
    total -= 0.5 * (A.transpose() * QiA * a.autom).trace();
    total -= b.dot(QiA * a.mean_prev);
    total -= ((model.input_matrix.transpose() * QiA).array() *
              a.input_prev.array())
                 .sum();
    total -= a.input_sum.dot(model.input_matrix.transpose() * Qib);
    total -= 0.5 * a.count * b.dot(Qib);
  }
  return total / w.num_samples;
}

inline Vec q_gradient_core(const PwassModel& model, const Theta& theta,
                           const QWorkspace& w) {
  const int nx = theta.state_dim();
  const int nr = theta.num_regimes();
  const auto submodels = assemble_all(model, theta);
  const Vec& l = model.pwa.boundaries;

  const int off_a = 0;
  const int off_b = nr;
  const int ni = theta.variant == ThetaVariant::Continuous ? 1 : nr;
  const int off_f = off_b + ni;
  const int off_phi_row = off_f + (nx - 2) * nx;
  const int off_phi_sub = off_phi_row + nx;
  Vec grad = Vec::Zero(Theta::flat_size(nx, nr, theta.variant));

  Vec dbeta = Vec::Zero(nr);  // derivative w.r.t. each per-regime intercept
  for (int i = 0; i < nr; ++i) {
    const RegimeAggregate& a = w.agg[i];
    if (a.count == 0.0) continue;
    const Mat& A = submodels[i].A;
    const Vec& b = submodels[i].b;
    const Mat dA = w.Qi * (a.cross.transpose() - A * a.autom -
                           b * a.mean_prev.transpose()) -
                   w.QiB * a.input_prev;
    const Vec db =
        w.Qi * (a.mean_curr - A * a.mean_prev -
                model.input_matrix * a.input_sum - a.count * b);
    grad.segment(off_phi_row, nx) += dA.row(0).transpose();
    grad[off_a + i] += dA(1, 0);
    grad.segment(off_phi_sub, nx - 1) += dA.row(1).tail(nx - 1).transpose();
    for (int r = 0; r + 2 < nx; ++r)
      grad.segment(off_f + r * nx, nx) += dA.row(2 + r).transpose();
    dbeta[i] = db[1];
  }

  if (theta.variant == ThetaVariant::Unconstrained) {
    grad.segment(off_b, nr) += dbeta;
  } else {
    // beta_k = b_1 + sum_{i<k} (a_i - a_{i+1}) l_{i+1}, so each dbeta_k
    // feeds b_1 directly and the slopes through the continuity recursion.
    grad[off_b] += dbeta.sum();
    for (int k = 1; k < nr; ++k) {
      if (dbeta[k] == 0.0) continue;
      grad[off_a] += dbeta[k] * l[1];
      for (int j = 1; j < k; ++j)
        grad[off_a + j] += dbeta[k] * (l[j + 1] - l[j]);
      grad[off_a + k] -= dbeta[k] * l[k];
    }
  }
  return grad / w.num_samples;
}

/// The surrogate is a concave quadratic in the flat parameter vector, so
/// its gradient is affine: g(theta) = g0 + H theta. Recovers (g0, H) from
/// gradient evaluations at zero and at the basis vectors; exact because the
/// evaluations are themselves exact.
inline std::pair<Vec, Mat> gradient_affine_form(const PwassModel& model,
                                                const QWorkspace& w,
                                                ThetaVariant variant) {
  const int nx = model.state_dim();
  const int nr = model.num_regimes();
  const int dim = Theta::flat_size(nx, nr, variant);
  const Vec g0 =
      q_gradient_core(model, Theta::unpack(Vec::Zero(dim), nx, nr, variant), w);
  Mat H(dim, dim);
  Vec e = Vec::Zero(dim);
  for (int k = 0; k < dim; ++k) {
    e[k] = 1.0;
    H.col(k) = q_gradient_core(model, Theta::unpack(e, nx, nr, variant), w) - g0;
    e[k] = 0.0;
  }
  return {g0, symmetrized(H)};
}

}  // namespace detail

/// Monte-Carlo surrogate value: the sample average over trajectories of the
/// summed per-transition inner products with the natural parameters plus
/// the constant terms.
inline double q_value(const PwassModel& model, const Theta& theta,
                      const SufficientStats& stats, const Mat& U) {
  return detail::q_value_core(model, theta,
                              detail::make_q_workspace(model, stats, U));
}

/// Analytic gradient of q_value with respect to the flat parameter vector,
/// in pack() order. The Continuous variant chains through the continuity
/// recursion that ties the intercepts to the slopes and b_1.
inline Vec q_gradient(const PwassModel& model, const Theta& theta,
                      const SufficientStats& stats, const Mat& U) {
  return detail::q_gradient_core(model, theta,
                                 detail::make_q_workspace(model, stats, U));
}

/// Regimes (0-based) that received no samples at any transition.
inline std::vector<int> starved_regimes(const std::vector<double>& counts) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(counts.size()); ++i)
    if (counts[i] == 0.0) out.push_back(i);
  return out;
}

/// First index of the trailing run of empty regimes (counts.size() if the
/// last regime has samples). Under the Continuous variant a slope a_i is
/// unsupported only when regimes i..N_r-1 are all empty: an interior empty
/// regime's slope still enters later intercepts through continuity.
inline int trailing_empty_start(const std::vector<double>& counts) {
  int s = static_cast<int>(counts.size());
  while (s > 0 && counts[s - 1] == 0.0) --s;
  return s;
}

/// Flat parameter indices left without any support by the statistics:
/// slopes and intercepts of empty regimes (Unconstrained), or the slopes of
/// the trailing run of empty regimes (Continuous).
inline std::vector<int> unsupported_indices(const std::vector<double>& counts,
                                            ThetaVariant variant) {
  const int nr = static_cast<int>(counts.size());
  std::vector<int> idx;
  if (variant == ThetaVariant::Unconstrained) {
    for (int i = 0; i < nr; ++i)
      if (counts[i] == 0.0) {
        idx.push_back(i);       // a_i
        idx.push_back(nr + i);  // b_i
      }
  } else {
    for (int i = trailing_empty_start(counts); i < nr; ++i) idx.push_back(i);
  }
  return idx;
}

/// Maximizes the surrogate with the listed flat components pinned to the
/// given values, solving the stationarity system on the free components.
/// This is the degenerate-regime path of run_em; m_step_closed_form is the
/// unconstrained entry point.
inline Theta m_step_closed_form_frozen(const PwassModel& model,
                                       const SufficientStats& stats,
                                       const Mat& U, ThetaVariant variant,
                                       const std::vector<int>& frozen_idx,
                                       const Vec& frozen_values) {
  const auto w = detail::make_q_workspace(model, stats, U);
  const int nx = model.state_dim();
  const int nr = model.num_regimes();
  auto [g0, H] = detail::gradient_affine_form(model, w, variant);
  const int dim = static_cast<int>(g0.size());

  std::vector<char> is_frozen(dim, 0);
  Vec x = Vec::Zero(dim);
  for (std::size_t k = 0; k < frozen_idx.size(); ++k) {
    if (frozen_idx[k] < 0 || frozen_idx[k] >= dim)
      throw StructuralError("frozen parameter index out of range");
    is_frozen[frozen_idx[k]] = 1;
    x[frozen_idx[k]] = frozen_values[static_cast<int>(k)];
  }
  std::vector<int> free_idx;
  for (int k = 0; k < dim; ++k)
    if (!is_frozen[k]) free_idx.push_back(k);
  const int nf = static_cast<int>(free_idx.size());
  if (nf == 0) return Theta::unpack(x, nx, nr, variant);

  // Gradient restricted to the free components, with frozen ones in place.
  const Vec gx = g0 + H * x;
  Vec rhs(nf);
  Mat Hneg(nf, nf);
  for (int p = 0; p < nf; ++p) {
    rhs[p] = gx[free_idx[p]];
    for (int q = 0; q < nf; ++q) Hneg(p, q) = -H(free_idx[p], free_idx[q]);
  }

  auto fail = [&]() -> void {
    const auto counts = stats.regime_counts();
    std::vector<int> starved;
    for (int i : starved_regimes(counts)) starved.push_back(i + 1);
    if (!starved.empty())
      throw UnidentifiableRegimeError(
          "m-step normal equations are singular: regime(s) " +
              join_ints(starved) + " received no samples",
          starved);
    throw NumericError("m-step normal equations are singular");
  };

  Eigen::LDLT<Mat> ldlt(Hneg);
  if (ldlt.info() != Eigen::Success) fail();
  const Vec d = ldlt.vectorD();
  if (d.minCoeff() <= 1e-12 * std::max(d.maxCoeff(), 0.0)) fail();

  Vec sol = ldlt.solve(rhs);
  for (int refine = 0; refine < 2; ++refine)
    sol += ldlt.solve(rhs - Hneg * sol);

  const double scale = std::max(
      {rhs.cwiseAbs().maxCoeff(), (Hneg.cwiseAbs() * sol.cwiseAbs()).maxCoeff(),
       1e-300});
  if ((rhs - Hneg * sol).cwiseAbs().maxCoeff() > 1e-6 * scale) fail();

  for (int p = 0; p < nf; ++p) x[free_idx[p]] = sol[p];
  return Theta::unpack(x, nx, nr, variant);
}

/// Exact M-step: the surrogate is a concave quadratic, so its maximizer is
/// the solution of the linear stationarity system.
inline Theta m_step_closed_form(const PwassModel& model,
                                const SufficientStats& stats, const Mat& U,
                                ThetaVariant variant) {
  const auto counts = stats.regime_counts();
  const bool deficient = variant == ThetaVariant::Unconstrained
                             ? !starved_regimes(counts).empty()
                             : trailing_empty_start(counts) <
                                   static_cast<int>(counts.size());
  if (deficient) {
    std::vector<int> starved;
    for (int i : starved_regimes(counts)) starved.push_back(i + 1);
    throw UnidentifiableRegimeError(
        "m-step normal equations are singular: regime(s) " +
            join_ints(starved) + " received no samples",
        starved);
  }
  return m_step_closed_form_frozen(model, stats, U, variant, {}, Vec());
}

struct MStepResult {
  Theta theta;
  double q = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
};

/// BFGS ascent on the surrogate (implemented as descent on its negation)
/// with an exact step along each search direction: the objective is
/// quadratic, so two evaluations pin the curvature and the minimizing step.
/// Returns the best iterate seen; on a line-search failure the flag is set
/// instead of throwing.
inline MStepResult m_step_quasi_newton(const PwassModel& model,
                                       const SufficientStats& stats,
                                       const Mat& U, const Theta& theta_init,
                                       double gradient_tol = 1e-8,
                                       int max_iterations = 200) {
  const auto w = detail::make_q_workspace(model, stats, U);
  const int nx = model.state_dim();
  const int nr = model.num_regimes();
  const ThetaVariant variant = theta_init.variant;
  const int dim = Theta::flat_size(nx, nr, variant);

  auto fval = [&](const Vec& v) {
    return -detail::q_value_core(model, Theta::unpack(v, nx, nr, variant), w);
  };
  auto fgrad = [&](const Vec& v) -> Vec {
    return -detail::q_gradient_core(model, Theta::unpack(v, nx, nr, variant),
                                    w);
  };

  Vec x = theta_init.pack();
  double f = fval(x);
  Vec g = fgrad(x);
  Mat hinv = Mat::Identity(dim, dim);

  Vec best_x = x;
  double best_f = f;
  double best_gn = g.norm();

  MStepResult res;
  for (; res.iterations < max_iterations; ++res.iterations) {
    if (g.norm() <= gradient_tol) break;

    Vec p = -hinv * g;
    double slope = g.dot(p);
    if (slope >= 0.0) {
      hinv.setIdentity();
      p = -g;
      slope = g.dot(p);
    }

    const double f_unit = fval(x + p);
    const double curv = 2.0 * (f_unit - f - slope);
    double alpha = curv > 0.0 ? std::min(-slope / curv, 1e4) : 1.0;

    double f_new = 0.0;
    Vec x_new;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      x_new = x + alpha * p;
      f_new = fval(x_new);
      if (f_new <= f + 1e-4 * alpha * slope + 1e-12 * std::abs(f)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      res.line_search_failed = true;
      break;
    }

    const Vec g_new = fgrad(x_new);
    const Vec s = x_new - x;
    const Vec y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Mat I = Mat::Identity(dim, dim);
      hinv = (I - rho * s * y.transpose()) * hinv *
                 (I - rho * y * s.transpose()) +
             rho * s * s.transpose();
    }
    x = std::move(x_new);
    f = f_new;
    g = g_new;
    if (f < best_f) {
      best_f = f;
      best_x = x;
      best_gn = g.norm();
    }
  }

  res.theta = Theta::unpack(best_x, nx, nr, variant);
  res.q = -best_f;
  res.gradient_norm = best_gn;
  res.converged = best_gn <= gradient_tol;
  return res;
}

enum class MStepMode { ClosedForm, QuasiNewton, BothCrosscheck };

struct EmConfig {
  int num_trajectories = 300;
  int num_iterations = 100;
  MStepMode mstep_mode = MStepMode::ClosedForm;
  double gradient_tol = 1e-8;
  int max_inner_iterations = 200;
  std::uint64_t seed = 0;
  ThetaVariant variant = ThetaVariant::Continuous;
  bool freeze_samples = false;
  int workers = 1;
  bool record_timing = false;

  void validate() const {
    if (num_trajectories < 1)
      throw StructuralError("num_trajectories must be >= 1");
    if (num_iterations < 0)
      throw StructuralError("num_iterations must be >= 0");
    if (!(gradient_tol > 0.0))
      throw StructuralError("gradient_tol must be positive");
    if (max_inner_iterations < 1)
      throw StructuralError("max_inner_iterations must be >= 1");
    if (workers < 1) throw StructuralError("workers must be >= 1");
  }
};

/// Draws M regime trajectories from the factorized posterior: each r_t is
/// sampled independently from the region posterior of the eta measurement
/// at time t. The per-time posteriors do not depend on theta, so they are
/// computed once. Draw order is fixed: trajectories in order of sample id,
/// times increasing within each trajectory.
inline std::vector<RegimeTrajectory> sample_regime_trajectories(
    const PwassModel& model, const Mat& Y, int num_trajectories, Rng& rng) {
  const int T = static_cast<int>(Y.cols());
  if (T < 2) throw StructuralError("need a horizon of at least 2");
  if (num_trajectories < 1)
    throw StructuralError("need at least one trajectory");
  const double variance = model.eta_meas_variance();
  std::vector<RegionPosterior> post(T - 1);
  for (int t = 0; t + 1 < T; ++t)
    post[t] = region_posterior(
        Y(model.eta_meas_index, t) / model.eta_meas_scale, variance,
        model.pwa.boundaries);
  std::vector<RegimeTrajectory> out(num_trajectories);
  for (int j = 0; j < num_trajectories; ++j) {
    out[j].sample_id = j;
    out[j].regimes.resize(T - 1);
    for (int t = 0; t + 1 < T; ++t)
      out[j].regimes[t] = sample_categorical(post[t], rng);
  }
  return out;
}

struct EStepResult {
  std::vector<RegimeTrajectory> trajectories;
  std::vector<SmoothedMoments> moments;
  SufficientStats stats;
};

/// One Monte-Carlo E-step: samples regime trajectories (or reuses the given
/// ones), smooths each conditioned on its regimes, and accumulates the
/// sufficient statistics. Smoothing passes run in parallel over immutable
/// inputs; the statistics are reduced sequentially in sample order so the
/// result is bit-identical for a fixed seed regardless of worker count.
inline EStepResult e_step(const PwassModel& model, const Theta& theta,
                          const Mat& Y, const Mat& U, const EmConfig& config,
                          Rng& rng,
                          const std::vector<RegimeTrajectory>* reuse = nullptr) {
  EStepResult r;
  r.trajectories =
      reuse ? *reuse
            : sample_regime_trajectories(model, Y, config.num_trajectories,
                                         rng);
  const int M = static_cast<int>(r.trajectories.size());
  const int T = static_cast<int>(Y.cols());
  r.moments.resize(M);
  const auto submodels = assemble_all(model, theta);
  parallel_for(M, config.workers, [&](int j) {
    try {
      r.moments[j] = rts_backward(
          forward_filter(model, submodels, r.trajectories[j].regimes, Y, U),
          r.trajectories[j].regimes, submodels);
    } catch (const NumericError& e) {
      throw NumericError("sample j=" + std::to_string(j + 1) + ": " +
                         e.what());
    }
  });
  r.stats = make_stats(T, model.num_regimes(), model.state_dim());
  for (int j = 0; j < M; ++j)
    accumulate_stats(r.stats, r.trajectories[j], r.moments[j]);
  return r;
}

struct EmIterate {
  Vec theta_flat;
  double q = std::numeric_limits<double>::quiet_NaN();
  double elapsed_seconds = 0.0;
  std::vector<std::string> warnings;
};

struct EmTrace {
  std::vector<std::string> param_names;
  std::vector<EmIterate> iterates;  // num_iterations + 1 rows, row 0 = theta_0
};

struct EmResult {
  Theta theta;
  EmTrace trace;
};

namespace detail {

inline void crosscheck_m_steps(const std::vector<std::string>& names,
                               const Vec& closed, const Vec& quasi,
                               int iteration) {
  for (int k = 0; k < closed.size(); ++k) {
    const double diff = std::abs(closed[k] - quasi[k]);
    if (diff > 1e-5 * std::max(1.0, std::abs(closed[k])))
      throw NumericError(
          "m-step cross-check failed at iteration " +
          std::to_string(iteration) + ": component " + names[k] +
          " closed-form " + std::to_string(closed[k]) + " vs quasi-Newton " +
          std::to_string(quasi[k]));
  }
}

}  // namespace detail

/// Monte-Carlo EM. Each iteration resamples the regime trajectories from
/// the passed stream (unless freeze_samples reuses the first draw), runs
/// the smoothing E-step and maximizes the surrogate. Regimes that received
/// no samples keep their unsupported parameters at the previous iterate's
/// values, with a warning recorded on that iteration.
inline EmResult run_em(const PwassModel& model, const Theta& theta0,
                       const Mat& Y, const Mat& U, const EmConfig& config,
                       Rng& rng) {
  config.validate();
  model.validate();
  if (theta0.variant != config.variant)
    throw StructuralError("initial theta variant differs from config");
  const int nx = model.state_dim();
  const int nr = model.num_regimes();
  if (theta0.state_dim() != nx || theta0.num_regimes() != nr)
    throw StructuralError("initial theta does not match the model");

  EmResult out;
  out.trace.param_names = Theta::flat_names(nx, nr, config.variant);
  EmIterate init;
  init.theta_flat = theta0.pack();
  out.trace.iterates.push_back(std::move(init));

  Theta theta = theta0;
  std::vector<RegimeTrajectory> frozen;
  for (int k = 1; k <= config.num_iterations; ++k) {
    const auto tic = std::chrono::steady_clock::now();
    EmIterate rec;
    try {
      const std::vector<RegimeTrajectory>* reuse =
          config.freeze_samples && k > 1 ? &frozen : nullptr;
      EStepResult es = e_step(model, theta, Y, U, config, rng, reuse);
      if (config.freeze_samples && k == 1) frozen = es.trajectories;

      const auto counts = es.stats.regime_counts();
      const auto starved = starved_regimes(counts);
      const auto frozen_idx = unsupported_indices(counts, config.variant);
      if (!starved.empty()) {
        std::vector<int> labels;
        for (int i : starved) labels.push_back(i + 1);
        std::string note = "regime(s) " + join_ints(labels) +
                           " received no samples";
        if (!frozen_idx.empty())
          note += "; unsupported parameters kept their previous values";
        rec.warnings.push_back(note);
      }
      const Vec prev_flat = theta.pack();
      Vec frozen_vals(static_cast<int>(frozen_idx.size()));
      for (std::size_t p = 0; p < frozen_idx.size(); ++p)
        frozen_vals[static_cast<int>(p)] = prev_flat[frozen_idx[p]];

      Theta next = theta;
      if (config.mstep_mode == MStepMode::QuasiNewton) {
        MStepResult ms =
            m_step_quasi_newton(model, es.stats, U, theta, config.gradient_tol,
                                config.max_inner_iterations);
        if (ms.line_search_failed)
          rec.warnings.push_back("quasi-Newton line search failed; kept the "
                                 "best iterate");
        next = std::move(ms.theta);
      } else {
        next = m_step_closed_form_frozen(model, es.stats, U, config.variant,
                                         frozen_idx, frozen_vals);
        if (config.mstep_mode == MStepMode::BothCrosscheck) {
          MStepResult ms = m_step_quasi_newton(model, es.stats, U, theta,
                                               config.gradient_tol,
                                               config.max_inner_iterations);
          detail::crosscheck_m_steps(out.trace.param_names, next.pack(),
                                     ms.theta.pack(), k);
        }
      }
      rec.q = q_value(model, next, es.stats, U);
      rec.theta_flat = next.pack();
      theta = std::move(next);
    } catch (const StructuralError&) {
      throw;
    } catch (const std::exception& e) {
      throw NumericError("EM iteration " + std::to_string(k) + ": " +
                         e.what());
    }
    if (config.record_timing)
      rec.elapsed_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - tic)
              .count();
    out.trace.iterates.push_back(std::move(rec));
  }
  out.theta = theta;
  return out;
}

inline EmResult run_em(const PwassModel& model, const Theta& theta0,
                       const Mat& Y, const Mat& U, const EmConfig& config) {
  Rng rng(config.seed);
  return run_em(model, theta0, Y, U, config, rng);
}

}  // namespace pwass
