#ifndef GPKRYLOV_COMMON_HPP
#define GPKRYLOV_COMMON_HPP

#include <Eigen/Dense>

#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace gpkrylov {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Invalid arguments or malformed inputs (bad dimensions, bad config, parse
/// failures). Maps to CLI exit code 1.
class input_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failures (loss of positive definiteness, factorization
/// breakdown, non-finite intermediates). Maps to CLI exit code 2.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Breakdown inside an iterative solver.
class solver_error : public numerical_error {
 public:
  using numerical_error::numerical_error;
};

/// Anything that can be applied to a vector, matrix-free.
template <typename Op>
concept ApplyOperator = requires(const Op& op, const Vector& v) {
  { op.apply(v) } -> std::convertible_to<Vector>;
  { op.rows() } -> std::convertible_to<Index>;
};

/// Left-preconditioner surface needed by the conjugate gradient method.
template <typename P>
concept SolveOperator = requires(const P& p, const Vector& v) {
  { p.solve(v) } -> std::convertible_to<Vector>;
};

/// Symmetric operator with a cheap trace, as needed by the
/// trace-of-inverse-times-derivative formula.
template <typename Op>
concept TraceableOperator = ApplyOperator<Op> && requires(const Op& op) {
  { op.trace() } -> std::convertible_to<double>;
};

/// No-op preconditioner. Using it turns preconditioned CG into plain CG and
/// the variance-reduced estimators into their plain stochastic baselines.
struct IdentityPreconditioner {
  Index n = 0;

  Index rows() const { return n; }
  Vector solve(const Vector& v) const { return v; }
  Matrix solve_matrix(const Matrix& m) const { return m; }
  Vector apply(const Vector& v) const { return v; }
  double logdet() const { return 0.0; }
  // The identity does not depend on any hyperparameter.
  Vector deriv_apply(int, const Vector& v) const { return Vector::Zero(v.size()); }
  double trace_inv_deriv(int) const { return 0.0; }
};

/// Wraps a dense symmetric matrix as an apply operator.
struct DenseSymmetricOp {
  const Matrix* mat = nullptr;

  Index rows() const { return mat->rows(); }
  Vector apply(const Vector& v) const { return (*mat).selfadjointView<Eigen::Lower>() * v; }
  double trace() const { return mat->trace(); }
};

/// c * I as an operator.
struct ScaledIdentityOp {
  Index n = 0;
  double scale = 1.0;

  Index rows() const { return n; }
  Vector apply(const Vector& v) const { return scale * v; }
  double trace() const { return scale * static_cast<double>(n); }
};

/// SplitMix64 step; used to derive independent stream seeds from a master
/// seed without correlations between consecutive integers.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw input_error(message);
}

}  // namespace gpkrylov

#endif
