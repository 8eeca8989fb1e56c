#pragma once

#include "pwass/common.hpp"
#include "pwass/model.hpp"

#include <string>
#include <vector>

namespace pwass {

/// Forward Kalman pass moments, 0-based in time: pred_*[t] is the moment of
/// x_t given measurements before t (pred_*[0] is the prior), filt_*[t] given
/// measurements up to t. Note the forward pass applies no measurement
/// update at t = 0: the prior is copied into the filtered state, so y_0
/// never enters the recursions.
struct FilterMoments {
  std::vector<Vec> pred_mean, filt_mean;
  std::vector<Mat> pred_cov, filt_cov;

  int horizon() const { return static_cast<int>(filt_mean.size()); }
};

/// Smoothed moments, 0-based in time. cross[t] is the lag-one smoothed
/// cross-covariance Cov(x_{t+1}, x_t | all measurements), t = 0..T-2.
struct SmoothedMoments {
  std::vector<Vec> mean;
  std::vector<Mat> cov;
  std::vector<Mat> cross;

  int horizon() const { return static_cast<int>(mean.size()); }
};

/// One Kalman prediction step through x' = A x + B u + b + w, w ~ N(0, Q).
inline std::pair<Vec, Mat> kf_predict(const Vec& filt_mean,
                                      const Mat& filt_cov, const Mat& A,
                                      const Vec& b, const Mat& B, const Vec& u,
                                      const Mat& Q) {
  Vec mean = A * filt_mean + B * u + b;
  Mat cov = symmetrized(A * filt_cov * A.transpose() + Q);
  return {std::move(mean), std::move(cov)};
}

/// One Kalman measurement update with y = C x + v, v ~ N(0, R).
inline std::pair<Vec, Mat> kf_update(const Vec& pred_mean, const Mat& pred_cov,
                                     const Mat& C, const Mat& R, const Vec& y) {
  const Mat innov_cov = symmetrized(C * pred_cov * C.transpose() + R);
  Eigen::LLT<Mat> llt(innov_cov);
  if (llt.info() != Eigen::Success)
    throw NumericError("innovation covariance is singular");
  const Mat gain = llt.solve(C * pred_cov).transpose();
  Vec mean = pred_mean + gain * (y - C * pred_mean);
  Mat cov = symmetrized(pred_cov - gain * C * pred_cov);
  return {std::move(mean), std::move(cov)};
}

/// Backward Rauch-Tung-Striebel pass over a fixed regime trajectory.
/// regimes[t] selects the submodel driving the transition t -> t+1,
/// t = 0..T-2. Also fills the lag-one cross-covariances
/// cross[t] = smoothed_cov[t+1] * G_t'.
inline SmoothedMoments rts_backward(const FilterMoments& filter,
                                    const std::vector<int>& regimes,
                                    const std::vector<Submodel>& submodels) {
  const int T = filter.horizon();
  if (static_cast<int>(regimes.size()) != T - 1)
    throw StructuralError("regime trajectory must have length T - 1");
  SmoothedMoments sm;
  sm.mean.resize(T);
  sm.cov.resize(T);
  sm.cross.resize(T > 0 ? T - 1 : 0);
  if (T == 0) return sm;
  sm.mean[T - 1] = filter.filt_mean[T - 1];
  sm.cov[T - 1] = filter.filt_cov[T - 1];
  for (int t = T - 2; t >= 0; --t) {
    const Mat& A = submodels[regimes[t]].A;
    Eigen::LLT<Mat> llt(filter.pred_cov[t + 1]);
    if (llt.info() != Eigen::Success)
      throw NumericError("predicted covariance is singular at t=" +
                         std::to_string(t + 1));
    const Mat gain = llt.solve(A * filter.filt_cov[t]).transpose();
    sm.mean[t] =
        filter.filt_mean[t] + gain * (sm.mean[t + 1] - filter.pred_mean[t + 1]);
    sm.cov[t] = symmetrized(
        filter.filt_cov[t] +
        gain * (sm.cov[t + 1] - filter.pred_cov[t + 1]) * gain.transpose());
    sm.cross[t] = sm.cov[t + 1] * gain.transpose();
  }
  return sm;
}

/// Forward pass over a fixed regime trajectory. The prior is copied into
/// the filtered state at t = 0; the loop then predicts with submodel
/// regimes[t] and updates with y_{t+1}. Y is n_y x T, U is n_u x T (only
/// columns 0..T-2 of U are consumed).
inline FilterMoments forward_filter(const PwassModel& model,
                                    const std::vector<Submodel>& submodels,
                                    const std::vector<int>& regimes,
                                    const Mat& Y, const Mat& U) {
  const int T = static_cast<int>(Y.cols());
  if (static_cast<int>(regimes.size()) != T - 1)
    throw StructuralError("regime trajectory must have length T - 1");
  if (U.cols() < T - 1)
    throw StructuralError("input series shorter than horizon - 1");
  FilterMoments fm;
  fm.pred_mean.resize(T);
  fm.pred_cov.resize(T);
  fm.filt_mean.resize(T);
  fm.filt_cov.resize(T);
  fm.pred_mean[0] = model.prior_mean;
  fm.pred_cov[0] = model.prior_cov;
  fm.filt_mean[0] = model.prior_mean;
  fm.filt_cov[0] = model.prior_cov;
  for (int t = 0; t + 1 < T; ++t) {
    const Submodel& s = submodels[regimes[t]];
    auto [pm, pc] = kf_predict(fm.filt_mean[t], fm.filt_cov[t], s.A, s.b,
                               model.input_matrix, U.col(t), model.process_cov);
    fm.pred_mean[t + 1] = std::move(pm);
    fm.pred_cov[t + 1] = std::move(pc);
    try {
      auto [um, uc] = kf_update(fm.pred_mean[t + 1], fm.pred_cov[t + 1],
                                model.meas_matrix, model.meas_cov, Y.col(t + 1));
      fm.filt_mean[t + 1] = std::move(um);
      fm.filt_cov[t + 1] = std::move(uc);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at t=" +
                         std::to_string(t + 1));
    }
  }
  return fm;
}

/// Full smoothing pass for one regime trajectory: forward filter then
/// backward RTS recursion.
inline SmoothedMoments smooth_trajectory(const PwassModel& model,
                                         const Theta& theta,
                                         const std::vector<int>& regimes,
                                         const Mat& Y, const Mat& U) {
  const auto submodels = assemble_all(model, theta);
  return rts_backward(forward_filter(model, submodels, regimes, Y, U), regimes,
                      submodels);
}

}  // namespace pwass
