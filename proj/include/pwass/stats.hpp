#pragma once

#include "pwass/common.hpp"
#include "pwass/smoother.hpp"

#include <vector>

namespace pwass {

/// One sampled regime sequence: regimes[t] (0-based) drives the transition
/// t -> t+1, so the sequence has length T - 1.
struct RegimeTrajectory {
  std::vector<int> regimes;
  int sample_id = 0;
};

/// Sum of expected transition statistics over all samples j that assign a
/// given regime to a given transition. cross and autom are second moments,
/// so the smoothed covariance/lag-one terms are already folded in.
struct StatBlock {
  double count = 0.0;
  Mat cross;      // sum of E[x_{t-1} x_t']
  Vec mean_curr;  // sum of E[x_t]
  Mat autom;      // sum of E[x_{t-1} x_{t-1}']
  Vec mean_prev;  // sum of E[x_{t-1}]

  void init(int nx) {
    cross = Mat::Zero(nx, nx);
    mean_curr = Vec::Zero(nx);
    autom = Mat::Zero(nx, nx);
    mean_prev = Vec::Zero(nx);
  }
};

/// Monte-Carlo sufficient statistics of the surrogate likelihood, compressed
/// over samples: one StatBlock per (transition, regime) pair. Summing over
/// samples with a common regime label leaves the surrogate value unchanged
/// because it is linear in the statistics, and cuts memory from
/// O(T M nx^2) to O(T N_r nx^2).
struct SufficientStats {
  int horizon = 0;      // T
  int num_regimes = 0;  // N_r
  int num_samples = 0;  // M
  int state_dim = 0;
  std::vector<StatBlock> blocks;  // (T-1) * N_r, transition-major

  StatBlock& at(int transition, int regime) {
    return blocks[static_cast<std::size_t>(transition) * num_regimes + regime];
  }
  const StatBlock& at(int transition, int regime) const {
    return blocks[static_cast<std::size_t>(transition) * num_regimes + regime];
  }

  /// Samples assigned to each regime, summed over transitions.
  std::vector<double> regime_counts() const {
    std::vector<double> counts(num_regimes, 0.0);
    for (int t = 0; t + 1 < horizon; ++t)
      for (int i = 0; i < num_regimes; ++i) counts[i] += at(t, i).count;
    return counts;
  }
};

inline SufficientStats make_stats(int horizon, int num_regimes, int state_dim) {
  SufficientStats s;
  s.horizon = horizon;
  s.num_regimes = num_regimes;
  s.state_dim = state_dim;
  s.blocks.resize(static_cast<std::size_t>(horizon - 1) * num_regimes);
  for (auto& b : s.blocks) b.init(state_dim);
  return s;
}

/// Folds one smoothed trajectory into the statistics. For the transition
/// t -> t+1 the expected statistics under the smoothing posterior are
///   E[x_t x_{t+1}'] = m_t m_{t+1}' + Cov(x_t, x_{t+1})
///   E[x_t x_t']     = m_t m_t' + Cov(x_t)
/// with Cov(x_t, x_{t+1}) the transpose of the stored lag-one term.
inline void accumulate_stats(SufficientStats& stats,
                             const RegimeTrajectory& traj,
                             const SmoothedMoments& sm) {
  const int T = stats.horizon;
  for (int t = 0; t + 1 < T; ++t) {
    StatBlock& blk = stats.at(t, traj.regimes[t]);
    blk.count += 1.0;
    blk.cross += sm.mean[t] * sm.mean[t + 1].transpose() +
                 sm.cross[t].transpose();
    blk.mean_curr += sm.mean[t + 1];
    blk.autom += sm.mean[t] * sm.mean[t].transpose() + sm.cov[t];
    blk.mean_prev += sm.mean[t];
  }
  stats.num_samples += 1;
}

/// Per-regime reduction of the statistics against a fixed input series:
/// everything the surrogate and its derivatives need, independent of T.
struct RegimeAggregate {
  double count = 0.0;
  Mat cross;       // sum over (t, j) of E[x_{t-1} x_t']
  Vec mean_curr;   // sum of E[x_t]
  Mat autom;       // sum of E[x_{t-1} x_{t-1}']
  Vec mean_prev;   // sum of E[x_{t-1}]
  Mat input_prev;  // sum of u_{t-1} E[x_{t-1}]'   (n_u x n_x)
  Vec input_sum;   // count-weighted sum of u_{t-1} (n_u)
};

inline std::vector<RegimeAggregate> aggregate_by_regime(
    const SufficientStats& stats, const Mat& U) {
  const int nx = stats.state_dim;
  const int nu = static_cast<int>(U.rows());
  std::vector<RegimeAggregate> agg(stats.num_regimes);
  for (auto& a : agg) {
    a.cross = Mat::Zero(nx, nx);
    a.mean_curr = Vec::Zero(nx);
    a.autom = Mat::Zero(nx, nx);
    a.mean_prev = Vec::Zero(nx);
    a.input_prev = Mat::Zero(nu, nx);
    a.input_sum = Vec::Zero(nu);
  }
  for (int t = 0; t + 1 < stats.horizon; ++t) {
    for (int i = 0; i < stats.num_regimes; ++i) {
      const StatBlock& blk = stats.at(t, i);
      if (blk.count == 0.0) continue;
      RegimeAggregate& a = agg[i];
      a.count += blk.count;
      a.cross += blk.cross;
      a.mean_curr += blk.mean_curr;
      a.autom += blk.autom;
      a.mean_prev += blk.mean_prev;
      a.input_prev += U.col(t) * blk.mean_prev.transpose();
      a.input_sum += blk.count * U.col(t);
    }
  }
  return agg;
}

}  // namespace pwass
