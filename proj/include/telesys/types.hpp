#pragma once

#include <Eigen/Dense>

#include <limits>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace telesys {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Malformed or inconsistent input data (files, channel layouts, dimensions).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a meaningful result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or command-line usage.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kVersion = "0.3.1";

namespace detail {

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DataError("dimension mismatch: " + what);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// Symmetrize in place and clip negative eigenvalues to zero. An LDLT pass
// screens out the common PSD case before falling back to an eigensolve.
inline void symmetrize_psd(Matrix& m) {
  m = (0.5 * (m + m.transpose())).eval();
  if (m.rows() == 0) return;
  Eigen::LDLT<Matrix> ldlt(m);
  const double tol = -64.0 * std::numeric_limits<double>::epsilon() * m.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() >= tol) return;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  Vector ev = es.eigenvalues().cwiseMax(0.0);
  m = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  m = (0.5 * (m + m.transpose())).eval();
}

inline double min_eigenvalue(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace detail
}  // namespace telesys
