#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pwass {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Structural problems: malformed models, parameter vectors, configs, files.
class StructuralError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Numerical failures: singular covariances, diverging states, failed solves.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when the M-step normal equations are singular because one or more
/// regimes received no samples. Regime labels are 1-based in messages.
class UnidentifiableRegimeError : public NumericError {
 public:
  UnidentifiableRegimeError(const std::string& msg, std::vector<int> regimes)
      : NumericError(msg), starved(std::move(regimes)) {}

  std::vector<int> starved;
};

inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline double max_abs(const Mat& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Checks symmetry within `sym_tol` and smallest eigenvalue > 0.
inline void require_spd(const Mat& m, const std::string& name,
                        double sym_tol = 1e-12) {
  if (m.rows() != m.cols())
    throw StructuralError(name + " must be square");
  if (max_abs(m - m.transpose()) > sym_tol * std::max(1.0, max_abs(m)))
    throw StructuralError(name + " is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(m),
                                        Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw StructuralError(name + " is not positive definite");
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace pwass
