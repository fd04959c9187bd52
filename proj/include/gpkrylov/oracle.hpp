#ifndef GPKRYLOV_ORACLE_HPP
#define GPKRYLOV_ORACLE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "gpkrylov/common.hpp"

// Dense brute-force reference computations. Everything here is O(n^3) and
// meant for tests and desk-scale verification, not production paths. Each
// quantity is computed along two independent routes (factorization and
// eigendecomposition); disagreement beyond tolerance means the oracle itself
// is broken and raises, rather than silently blessing the code under test.

namespace gpkrylov::oracle {

namespace detail {
constexpr double kDualRouteRelTol = 1e-9;

inline double rel_gap(double a, double b) {
  double scale = std::max({std::abs(a), std::abs(b), 1.0});
  return std::abs(a - b) / scale;
}
}  // namespace detail

/// Symmetric positive definite matrix with cached factorizations.
class DenseSpd {
 public:
  explicit DenseSpd(Matrix a) : mat_(std::move(a)) {
    if (mat_.rows() != mat_.cols()) throw input_error("DenseSpd: matrix must be square");
    const double asym = (mat_ - mat_.transpose()).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, mat_.cwiseAbs().maxCoeff());
    if (asym > 1e-12 * scale)
      throw input_error("DenseSpd: matrix not symmetric (max asymmetry " + std::to_string(asym) + ")");
    mat_ = ((mat_ + mat_.transpose()) / 2.0).eval();
    eig_.compute(mat_);
    if (eig_.info() != Eigen::Success) throw numerical_error("DenseSpd: eigendecomposition failed");
    const double lmax = eig_.eigenvalues().cwiseAbs().maxCoeff();
    if (eig_.eigenvalues().minCoeff() < -1e-10 * lmax)
      throw numerical_error("DenseSpd: matrix not positive semidefinite (lambda_min " +
                            std::to_string(eig_.eigenvalues().minCoeff()) + ")");
    llt_.compute(mat_);
    if (llt_.info() != Eigen::Success)
      throw numerical_error("DenseSpd: Cholesky factorization failed");
  }

  Index rows() const { return mat_.rows(); }
  const Matrix& matrix() const { return mat_; }
  const Vector& eigenvalues() const { return eig_.eigenvalues(); }
  const Matrix& eigenvectors() const { return eig_.eigenvectors(); }
  const Eigen::LLT<Matrix>& llt() const { return llt_; }

 private:
  Matrix mat_;
  Eigen::SelfAdjointEigenSolver<Matrix> eig_;
  Eigen::LLT<Matrix> llt_;
};

/// log det(A), Cholesky route cross-checked against the eigenvalue route.
inline double dense_logdet(const DenseSpd& a) {
  const double via_chol = 2.0 * a.llt().matrixLLT().diagonal().array().log().sum();
  const double via_eig = a.eigenvalues().array().log().sum();
  if (detail::rel_gap(via_chol, via_eig) > detail::kDualRouteRelTol)
    throw numerical_error("dense_logdet: factorization and eigenvalue routes disagree (" +
                          std::to_string(via_chol) + " vs " + std::to_string(via_eig) + ")");
  return via_chol;
}

/// Matrix logarithm V log(Lambda) V^T.
inline Matrix dense_matrix_log(const DenseSpd& a) {
  if (a.eigenvalues().minCoeff() <= 0.0)
    throw numerical_error("dense_matrix_log: nonpositive eigenvalue");
  return a.eigenvectors() * a.eigenvalues().array().log().matrix().asDiagonal() *
         a.eigenvectors().transpose();
}

/// tr(A^{-1} D), solve route cross-checked against the eigenvalue route.
inline double dense_trace_inv_deriv(const DenseSpd& a, const Matrix& d) {
  if (d.rows() != a.rows() || d.cols() != a.rows())
    throw input_error("dense_trace_inv_deriv: dimension mismatch");
  const double via_solve = a.llt().solve(d).trace();
  const Matrix vtdv = a.eigenvectors().transpose() * d * a.eigenvectors();
  const double via_eig = (vtdv.diagonal().array() / a.eigenvalues().array()).sum();
  if (detail::rel_gap(via_solve, via_eig) > detail::kDualRouteRelTol)
    throw numerical_error("dense_trace_inv_deriv: routes disagree (" + std::to_string(via_solve) +
                          " vs " + std::to_string(via_eig) + ")");
  return via_solve;
}

}  // namespace gpkrylov::oracle

#endif
