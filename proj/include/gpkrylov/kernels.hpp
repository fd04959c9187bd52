#ifndef GPKRYLOV_KERNELS_HPP
#define GPKRYLOV_KERNELS_HPP

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>

#include "gpkrylov/common.hpp"

namespace gpkrylov {

/// Kernel hyperparameters stored in log-space so optimizers work
/// unconstrained. Raw values are the output scale o, one lengthscale l_j per
/// input dimension and the noise variance sigma^2.
struct Hyperparameters {
  double log_outputscale = 0.0;
  Vector log_lengthscales;
  double log_noise = std::log(1e-2);

  int dim() const { return static_cast<int>(log_lengthscales.size()); }
  int num_params() const { return dim() + 2; }

  double outputscale() const { return std::exp(log_outputscale); }
  Vector lengthscales() const { return log_lengthscales.array().exp(); }
  double noise_variance() const { return std::exp(log_noise); }

  /// Raw (non-log) value of parameter `which` in the flat ordering
  /// (outputscale, lengthscale_0..d-1, noise variance).
  double raw_value(int which) const {
    if (which == 0) return outputscale();
    if (which >= 1 && which <= dim()) return std::exp(log_lengthscales[which - 1]);
    if (which == dim() + 1) return noise_variance();
    throw input_error("Hyperparameters: parameter index out of range");
  }

  Vector to_log_vector() const {
    Vector v(num_params());
    v[0] = log_outputscale;
    v.segment(1, dim()) = log_lengthscales;
    v[dim() + 1] = log_noise;
    return v;
  }

  static Hyperparameters from_log_vector(const Vector& v) {
    require(v.size() >= 3, "Hyperparameters: log vector needs at least 3 entries");
    Hyperparameters p;
    p.log_outputscale = v[0];
    p.log_lengthscales = v.segment(1, v.size() - 2);
    p.log_noise = v[v.size() - 1];
    return p;
  }

  void validate() const {
    auto ok = [](double lv) { return std::isfinite(lv) && std::isfinite(std::exp(lv)) && std::exp(lv) > 0.0; };
    require(ok(log_outputscale), "Hyperparameters: output scale not positive finite");
    require(ok(log_noise), "Hyperparameters: noise variance not positive finite");
    require(log_lengthscales.size() >= 1, "Hyperparameters: need at least one lengthscale");
    for (Index j = 0; j < log_lengthscales.size(); ++j)
      require(ok(log_lengthscales[j]), "Hyperparameters: lengthscale " + std::to_string(j) +
                                           " not positive finite");
  }
};

constexpr int kOutputscaleIndex = 0;
inline int lengthscale_index(int j) { return 1 + j; }
inline int noise_index(int d) { return d + 1; }

enum class KernelFamily { RBF, Matern12, Matern32, Matern52, RationalQuadratic };

inline std::string family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::RBF: return "rbf";
    case KernelFamily::Matern12: return "matern12";
    case KernelFamily::Matern32: return "matern32";
    case KernelFamily::Matern52: return "matern52";
    case KernelFamily::RationalQuadratic: return "ratquad";
  }
  return "?";
}

struct KernelSpec {
  KernelFamily family = KernelFamily::RBF;
  bool ard = true;
  double ratquad_alpha = 1.0;  // shape parameter of the rational quadratic
};

namespace detail {

// All families are stationary: k(x, y) = o^2 * shape(s) with
// s = sum_j (x_j - y_j)^2 / l_j^2 the squared scaled distance.
inline double shape(KernelFamily f, double alpha, double s) {
  switch (f) {
    case KernelFamily::RBF:
      return std::exp(-0.5 * s);
    case KernelFamily::Matern12:
      return std::exp(-std::sqrt(s));
    case KernelFamily::Matern32: {
      const double r = std::sqrt(3.0 * s);
      return (1.0 + r) * std::exp(-r);
    }
    case KernelFamily::Matern52: {
      const double r = std::sqrt(5.0 * s);
      return (1.0 + r + r * r / 3.0) * std::exp(-r);
    }
    case KernelFamily::RationalQuadratic:
      return std::pow(1.0 + s / (2.0 * alpha), -alpha);
  }
  return 0.0;
}

// d shape / d s. Callers multiply by squared coordinate differences, so the
// Matern(1/2) singularity at s = 0 contributes nothing; 0 is returned there.
inline double shape_ds(KernelFamily f, double alpha, double s) {
  switch (f) {
    case KernelFamily::RBF:
      return -0.5 * std::exp(-0.5 * s);
    case KernelFamily::Matern12: {
      if (s <= 0.0) return 0.0;
      const double r = std::sqrt(s);
      return -std::exp(-r) / (2.0 * r);
    }
    case KernelFamily::Matern32:
      return -1.5 * std::exp(-std::sqrt(3.0 * s));
    case KernelFamily::Matern52: {
      const double r = std::sqrt(5.0 * s);
      return -(5.0 / 6.0) * (1.0 + r) * std::exp(-r);
    }
    case KernelFamily::RationalQuadratic:
      return -0.5 * std::pow(1.0 + s / (2.0 * alpha), -alpha - 1.0);
  }
  return 0.0;
}

}  // namespace detail

/// Single kernel evaluation k(x, y).
inline double kernel_value(const KernelSpec& spec, const Hyperparameters& params, const Vector& x,
                           const Vector& y) {
  params.validate();
  require(x.size() == y.size(), "kernel_value: x and y dimensions differ");
  require(x.size() == params.dim(), "kernel_value: input dimension does not match lengthscales");
  const Vector ls = params.lengthscales();
  // ||x-y||^2 accumulated per dimension; no cancellation risk here.
  double s = ((x - y).array() / ls.array()).square().sum();
  const double o = params.outputscale();
  return o * o * detail::shape(spec.family, spec.ratquad_alpha, s);
}

enum class StorageMode { Dense, MatrixFree };

/// Matrix-free access to K_hat = K + sigma^2 I and its hyperparameter
/// derivatives. Dense mode assembles K_hat once; MatrixFree assembles row
/// blocks on demand and never materializes the full matrix. Immutable after
/// construction, safe for concurrent applies.
class KernelOperator {
 public:
  KernelOperator(KernelSpec spec, Matrix x, Hyperparameters params,
                 StorageMode mode = StorageMode::Dense, Index block_rows = 1024)
      : spec_(spec), x_(std::move(x)), params_(std::move(params)), mode_(mode),
        block_rows_(std::max<Index>(1, block_rows)) {
    params_.validate();
    require(x_.rows() >= 1, "KernelOperator: empty dataset");
    require(params_.dim() == x_.cols(), "KernelOperator: lengthscale count must equal data dimension");
    const Vector ls = params_.lengthscales();
    scaled_x_ = x_.array().rowwise() / ls.transpose().array();
    sqnorms_ = scaled_x_.rowwise().squaredNorm();
    if (mode_ == StorageMode::Dense) {
      dense_hat_ = assemble_kernel_rows(0, rows());
      dense_hat_.diagonal().array() += params_.noise_variance();
    }
  }

  Index rows() const { return x_.rows(); }
  int dim() const { return static_cast<int>(x_.cols()); }
  int num_params() const { return dim() + 2; }
  const KernelSpec& spec() const { return spec_; }
  const Hyperparameters& params() const { return params_; }
  const Matrix& data() const { return x_; }
  StorageMode mode() const { return mode_; }

  /// (K + sigma^2 I) v
  Vector apply(const Vector& v) const {
    check_input(v);
    if (mode_ == StorageMode::Dense)
      return dense_hat_.selfadjointView<Eigen::Lower>() * v;
    Vector out(rows());
    for (Index r0 = 0; r0 < rows(); r0 += block_rows_) {
      const Index nb = std::min(block_rows_, rows() - r0);
      out.segment(r0, nb).noalias() = assemble_kernel_rows(r0, r0 + nb) * v;
    }
    out += params_.noise_variance() * v;
    return out;
  }

  Matrix apply_matrix(const Matrix& m) const {
    Matrix out(rows(), m.cols());
    for (Index c = 0; c < m.cols(); ++c) out.col(c) = apply(Vector(m.col(c)));
    return out;
  }

  /// (d K_hat / d theta_which) v with theta the raw hyperparameter.
  /// The noise derivative is the identity.
  Vector deriv_apply(int which, const Vector& v) const {
    check_which(which);
    check_input(v);
    if (which == noise_index(dim())) return v;
    Vector out = Vector::Zero(rows());
    for (Index r0 = 0; r0 < rows(); r0 += block_rows_) {
      const Index nb = std::min(block_rows_, rows() - r0);
      out.segment(r0, nb).noalias() = assemble_deriv_rows(which, r0, r0 + nb) * v;
    }
    return out;
  }

  Matrix deriv_apply_matrix(int which, const Matrix& m) const {
    check_which(which);
    if (which == noise_index(dim())) return m;
    Matrix out = Matrix::Zero(rows(), m.cols());
    for (Index r0 = 0; r0 < rows(); r0 += block_rows_) {
      const Index nb = std::min(block_rows_, rows() - r0);
      out.middleRows(r0, nb).noalias() = assemble_deriv_rows(which, r0, r0 + nb) * m;
    }
    return out;
  }

  // Noise-free kernel matrix accessors used by preconditioner builders.

  Vector kernel_diagonal() const {
    const double o = params_.outputscale();
    return Vector::Constant(rows(), o * o);
  }

  Vector kernel_column(Index i) const {
    require(i >= 0 && i < rows(), "kernel_column: index out of range");
    const double o2 = std::pow(params_.outputscale(), 2);
    Vector s = (sqnorms_.array() + sqnorms_[i] - 2.0 * (scaled_x_ * scaled_x_.row(i).transpose()).array())
                   .max(0.0);
    return o2 * s.unaryExpr([this](double t) {
      return detail::shape(spec_.family, spec_.ratquad_alpha, t);
    });
  }

  Vector kernel_deriv_diagonal(int which) const {
    check_which(which);
    if (which == kOutputscaleIndex)
      return Vector::Constant(rows(), 2.0 * params_.outputscale());
    return Vector::Zero(rows());  // lengthscales and noise do not move the K diagonal
  }

  Vector kernel_deriv_column(int which, Index i) const {
    check_which(which);
    require(i >= 0 && i < rows(), "kernel_deriv_column: index out of range");
    if (which == noise_index(dim())) return Vector::Zero(rows());
    if (which == kOutputscaleIndex) return (2.0 / params_.outputscale()) * kernel_column(i);
    const int j = which - 1;
    const double o2 = std::pow(params_.outputscale(), 2);
    const double lj = std::exp(params_.log_lengthscales[j]);
    Vector s = (sqnorms_.array() + sqnorms_[i] - 2.0 * (scaled_x_ * scaled_x_.row(i).transpose()).array())
                   .max(0.0);
    Vector dshape = s.unaryExpr([this](double t) {
      return detail::shape_ds(spec_.family, spec_.ratquad_alpha, t);
    });
    Vector dj2 = (x_.col(j).array() - x_(i, j)).square();
    return (-2.0 * o2 / (lj * lj * lj)) * dshape.cwiseProduct(dj2);
  }

  /// Dense K + sigma^2 I; assembles in MatrixFree mode.
  Matrix dense_hat() const {
    if (mode_ == StorageMode::Dense) return dense_hat_;
    Matrix k = assemble_kernel_rows(0, rows());
    k.diagonal().array() += params_.noise_variance();
    return k;
  }

  /// Dense d K_hat / d theta_which.
  Matrix dense_deriv(int which) const {
    check_which(which);
    if (which == noise_index(dim())) return Matrix::Identity(rows(), rows());
    return assemble_deriv_rows(which, 0, rows());
  }

 private:
  void check_input(const Vector& v) const {
    require(v.size() == rows(), "KernelOperator: vector length does not match n");
    if (!v.allFinite()) throw input_error("KernelOperator: non-finite entries in input vector");
  }

  void check_which(int which) const {
    if (which < 0 || which > dim() + 1)
      throw input_error("KernelOperator: hyperparameter index out of range");
  }

  // Noise-free K[r0:r1, :].
  Matrix assemble_kernel_rows(Index r0, Index r1) const {
    const Index nb = r1 - r0;
    Matrix s = -2.0 * scaled_x_.middleRows(r0, nb) * scaled_x_.transpose();
    s.colwise() += sqnorms_.segment(r0, nb);
    s.rowwise() += sqnorms_.transpose();
    s = s.cwiseMax(0.0);  // clamp cancellation noise
    const double o2 = std::pow(params_.outputscale(), 2);
    return o2 * s.unaryExpr([this](double t) {
      return detail::shape(spec_.family, spec_.ratquad_alpha, t);
    });
  }

  // (d K / d theta_which)[r0:r1, :] for output scale and lengthscales.
  Matrix assemble_deriv_rows(int which, Index r0, Index r1) const {
    const Index nb = r1 - r0;
    if (which == kOutputscaleIndex)
      return (2.0 / params_.outputscale()) * assemble_kernel_rows(r0, r1);
    const int j = which - 1;
    Matrix s = -2.0 * scaled_x_.middleRows(r0, nb) * scaled_x_.transpose();
    s.colwise() += sqnorms_.segment(r0, nb);
    s.rowwise() += sqnorms_.transpose();
    s = s.cwiseMax(0.0);
    Matrix dshape = s.unaryExpr([this](double t) {
      return detail::shape_ds(spec_.family, spec_.ratquad_alpha, t);
    });
    Matrix dj = x_.col(j).segment(r0, nb).replicate(1, rows());
    dj.rowwise() -= x_.col(j).transpose();
    const double o2 = std::pow(params_.outputscale(), 2);
    const double lj = std::exp(params_.log_lengthscales[j]);
    return (-2.0 * o2 / (lj * lj * lj)) * dshape.cwiseProduct(dj.array().square().matrix());
  }

  KernelSpec spec_;
  Matrix x_;
  Hyperparameters params_;
  StorageMode mode_;
  Index block_rows_;
  Matrix scaled_x_;   // X with columns divided by lengthscales
  Vector sqnorms_;    // row squared norms of scaled_x_
  Matrix dense_hat_;  // only in Dense mode
};

/// Dense cross-kernel matrix k(A_i, B_j) (no noise term).
inline Matrix cross_kernel(const KernelSpec& spec, const Hyperparameters& params, const Matrix& a,
                           const Matrix& b) {
  params.validate();
  require(a.cols() == b.cols() && a.cols() == params.dim(), "cross_kernel: dimension mismatch");
  const Vector ls = params.lengthscales();
  const Matrix sa = a.array().rowwise() / ls.transpose().array();
  const Matrix sb = b.array().rowwise() / ls.transpose().array();
  Matrix s = -2.0 * sa * sb.transpose();
  s.colwise() += sa.rowwise().squaredNorm();
  s.rowwise() += sb.rowwise().squaredNorm().transpose();
  s = s.cwiseMax(0.0);
  const double o2 = std::pow(params.outputscale(), 2);
  return o2 * s.unaryExpr([&spec](double t) {
    return detail::shape(spec.family, spec.ratquad_alpha, t);
  });
}

inline Vector kernel_matvec(const KernelOperator& op, const Vector& v) { return op.apply(v); }

inline Vector kernel_deriv_matvec(const KernelOperator& op, int which, const Vector& v) {
  return op.deriv_apply(which, v);
}

}  // namespace gpkrylov

#endif
