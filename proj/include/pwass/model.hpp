#pragma once

#include "pwass/common.hpp"
#include "pwass/pwa.hpp"

#include <string>
#include <vector>

namespace pwass {

/// Piecewise affine state-space model. The state is x = [eta, zeta, chi]
/// with scalar eta and zeta; the first state row is phi_row' x, the second
/// is [a_i, phi_sub'] x + b_i with (a_i, b_i) selected by the region eta
/// occupies, and the remaining rows are f_block x. B, C, Q, R and the prior
/// are known constants; only the entries collected in Theta are estimated.
/// Immutable after construction.
struct PwassModel {
  Vec phi_row;       // first state-equation row, length n_x
  Vec phi_sub;       // length n_x - 1
  Mat f_block;       // (n_x - 2) x n_x
  Mat input_matrix;  // B, n_x x n_u
  Mat meas_matrix;   // C, n_y x n_x
  Mat process_cov;   // Q
  Mat meas_cov;      // R
  Vec prior_mean;
  Mat prior_cov;
  PwaFunction pwa;
  int eta_meas_index = 0;      // row of C carrying the direct eta measurement
  double eta_meas_scale = 1.0;

  int state_dim() const { return static_cast<int>(phi_row.size()); }
  int meas_dim() const { return static_cast<int>(meas_matrix.rows()); }
  int input_dim() const { return static_cast<int>(input_matrix.cols()); }
  int num_regimes() const { return pwa.num_regions(); }

  void validate() const {
    const int nx = state_dim();
    if (nx < 2) throw StructuralError("state dimension must be >= 2");
    if (phi_sub.size() != nx - 1)
      throw StructuralError("phi_sub must have length n_x - 1");
    if (f_block.rows() != nx - 2 || (f_block.rows() > 0 && f_block.cols() != nx))
      throw StructuralError("f_block must be (n_x - 2) x n_x");
    if (input_matrix.rows() != nx)
      throw StructuralError("input matrix must have n_x rows");
    if (meas_matrix.cols() != nx)
      throw StructuralError("measurement matrix must have n_x columns");
    if (prior_mean.size() != nx)
      throw StructuralError("prior mean must have length n_x");
    require_spd(process_cov, "process covariance");
    require_spd(meas_cov, "measurement covariance");
    require_spd(prior_cov, "prior covariance");
    if (process_cov.rows() != nx || prior_cov.rows() != nx)
      throw StructuralError("covariance dimensions must match n_x");
    if (meas_cov.rows() != meas_dim())
      throw StructuralError("measurement covariance must be n_y x n_y");
    if (eta_meas_index < 0 || eta_meas_index >= meas_dim())
      throw StructuralError("eta measurement index out of range");
    if (eta_meas_scale == 0.0)
      throw StructuralError("eta measurement scale must be nonzero");
    // Row eta_meas_index of C must select eta up to the scalar.
    Vec row = meas_matrix.row(eta_meas_index);
    if (row[0] != eta_meas_scale ||
        (nx > 1 && row.tail(nx - 1).cwiseAbs().maxCoeff() != 0.0))
      throw StructuralError(
          "row " + std::to_string(eta_meas_index) +
          " of C must be eta_meas_scale * e_1 (direct eta measurement)");
    pwa.validate();
  }

  /// Measurement-noise variance of the direct eta channel, in eta units.
  double eta_meas_variance() const {
    return meas_cov(eta_meas_index, eta_meas_index) /
           (eta_meas_scale * eta_meas_scale);
  }
};

enum class ThetaVariant { Unconstrained, Continuous };

/// The estimated parameters: per-regime slopes and intercepts of the
/// piecewise function plus the shared state rows (f_block, phi_row,
/// phi_sub). The Continuous variant keeps a single free intercept b_1 and
/// derives the rest from the continuity of the piecewise function. pack()
/// and unpack() map to/from a flat vector in the fixed order
/// a_1..a_{N_r}, b (or b_1), vec(f_block) row-major, phi_row, phi_sub.
struct Theta {
  ThetaVariant variant = ThetaVariant::Continuous;
  Vec slopes;      // length N_r
  Vec intercepts;  // length N_r (Unconstrained) or 1 = {b_1} (Continuous)
  Mat f_block;     // (n_x - 2) x n_x
  Vec phi_row;     // n_x
  Vec phi_sub;     // n_x - 1

  int num_regimes() const { return static_cast<int>(slopes.size()); }
  int state_dim() const { return static_cast<int>(phi_row.size()); }

  static int flat_size(int nx, int nr, ThetaVariant v) {
    const int intercepts = v == ThetaVariant::Continuous ? 1 : nr;
    return nr + intercepts + (nx - 2) * nx + nx + (nx - 1);
  }

  Vec pack() const {
    Vec flat(flat_size(state_dim(), num_regimes(), variant));
    int at = 0;
    flat.segment(at, slopes.size()) = slopes;
    at += static_cast<int>(slopes.size());
    flat.segment(at, intercepts.size()) = intercepts;
    at += static_cast<int>(intercepts.size());
    for (int r = 0; r < f_block.rows(); ++r) {
      flat.segment(at, f_block.cols()) = f_block.row(r);
      at += static_cast<int>(f_block.cols());
    }
    flat.segment(at, phi_row.size()) = phi_row;
    at += static_cast<int>(phi_row.size());
    flat.segment(at, phi_sub.size()) = phi_sub;
    return flat;
  }

  static Theta unpack(const Vec& flat, int nx, int nr, ThetaVariant v) {
    if (flat.size() != flat_size(nx, nr, v))
      throw StructuralError("flat parameter vector has wrong length");
    Theta th;
    th.variant = v;
    int at = 0;
    th.slopes = flat.segment(at, nr);
    at += nr;
    const int ni = v == ThetaVariant::Continuous ? 1 : nr;
    th.intercepts = flat.segment(at, ni);
    at += ni;
    th.f_block.resize(nx - 2, nx);
    for (int r = 0; r < nx - 2; ++r) {
      th.f_block.row(r) = flat.segment(at, nx);
      at += nx;
    }
    th.phi_row = flat.segment(at, nx);
    at += nx;
    th.phi_sub = flat.segment(at, nx - 1);
    return th;
  }

  /// Canonical component names matching pack() order.
  static std::vector<std::string> flat_names(int nx, int nr, ThetaVariant v) {
    std::vector<std::string> names;
    for (int i = 0; i < nr; ++i) names.push_back("a" + std::to_string(i + 1));
    const int ni = v == ThetaVariant::Continuous ? 1 : nr;
    for (int i = 0; i < ni; ++i) names.push_back("b" + std::to_string(i + 1));
    for (int r = 0; r < nx - 2; ++r)
      for (int c = 0; c < nx; ++c)
        names.push_back("F" + std::to_string(r + 1) + std::to_string(c + 1));
    for (int i = 0; i < nx; ++i)
      names.push_back("Phi" + std::to_string(i + 1));
    for (int i = 0; i < nx - 1; ++i)
      names.push_back("phi" + std::to_string(i + 1));
    return names;
  }

  /// Full per-regime intercept vector; derives b_2..b_{N_r} from continuity
  /// under the Continuous variant.
  Vec intercepts_full(const Vec& boundaries) const {
    if (variant == ThetaVariant::Unconstrained) return intercepts;
    return intercepts_from_continuity(slopes, intercepts[0], boundaries);
  }

  /// The true parameters of a model, as the estimation target.
  static Theta from_model(const PwassModel& m, ThetaVariant v) {
    Theta th;
    th.variant = v;
    th.slopes = m.pwa.slopes;
    th.intercepts =
        v == ThetaVariant::Continuous ? m.pwa.intercepts.head(1).eval()
                                      : m.pwa.intercepts;
    th.f_block = m.f_block;
    th.phi_row = m.phi_row;
    th.phi_sub = m.phi_sub;
    return th;
  }
};

/// One regime's affine dynamics x' = A x + b (+ B u + noise).
struct Submodel {
  Mat A;
  Vec b;
};

/// Assembles regime i's (A_i, b_i): row 0 is phi_row', row 1 is
/// [a_i, phi_sub'], remaining rows are f_block; b_i holds the intercept in
/// component 1 and zeros elsewhere. Regimes differ only in A(1,0) and b(1).
inline Submodel assemble_submodel(const PwassModel& model, const Theta& theta,
                                  int regime) {
  if (regime < 0 || regime >= theta.num_regimes())
    throw StructuralError("regime index out of range");
  const int nx = theta.state_dim();
  Submodel s;
  s.A.resize(nx, nx);
  s.A.row(0) = theta.phi_row;
  s.A(1, 0) = theta.slopes[regime];
  s.A.row(1).tail(nx - 1) = theta.phi_sub;
  if (nx > 2) s.A.bottomRows(nx - 2) = theta.f_block;
  s.b = Vec::Zero(nx);
  s.b[1] = theta.intercepts_full(model.pwa.boundaries)[regime];
  return s;
}

inline std::vector<Submodel> assemble_all(const PwassModel& model,
                                          const Theta& theta) {
  const int nx = theta.state_dim();
  const Vec b_full = theta.intercepts_full(model.pwa.boundaries);
  std::vector<Submodel> out(theta.num_regimes());
  for (int i = 0; i < theta.num_regimes(); ++i) {
    Submodel s;
    s.A.resize(nx, nx);
    s.A.row(0) = theta.phi_row;
    s.A(1, 0) = theta.slopes[i];
    s.A.row(1).tail(nx - 1) = theta.phi_sub;
    if (nx > 2) s.A.bottomRows(nx - 2) = theta.f_block;
    s.b = Vec::Zero(nx);
    s.b[1] = b_full[i];
    out[i] = std::move(s);
  }
  return out;
}

}  // namespace pwass
