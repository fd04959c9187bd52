#ifndef GPKRYLOV_PRECONDITIONERS_HPP
#define GPKRYLOV_PRECONDITIONERS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gpkrylov/common.hpp"
#include "gpkrylov/kernels.hpp"

namespace gpkrylov {

/// Diag-and-column access to the noise-free kernel matrix K. Builders pull
/// single columns so the full matrix never needs to exist.
struct KernelAccessor {
  Index n = 0;
  std::function<Vector()> diagonal;
  std::function<Vector(Index)> column;
};

inline KernelAccessor make_kernel_accessor(const KernelOperator& op) {
  return KernelAccessor{op.rows(), [&op]() { return op.kernel_diagonal(); },
                        [&op](Index i) { return op.kernel_column(i); }};
}

/// Accessor over an explicit symmetric matrix (the matrix must outlive it).
inline KernelAccessor make_dense_accessor(const Matrix& k) {
  return KernelAccessor{k.rows(), [&k]() { return Vector(k.diagonal()); },
                        [&k](Index i) { return Vector(k.col(i)); }};
}

enum class LowRankKind { PivotedCholesky, TruncatedSVD, RandomizedSVD, Nystroem, RFF, QFF };

inline std::string kind_name(LowRankKind k) {
  switch (k) {
    case LowRankKind::PivotedCholesky: return "pivoted_cholesky";
    case LowRankKind::TruncatedSVD: return "truncated_svd";
    case LowRankKind::RandomizedSVD: return "randomized_svd";
    case LowRankKind::Nystroem: return "nystroem";
    case LowRankKind::RFF: return "rff";
    case LowRankKind::QFF: return "qff";
  }
  return "?";
}

/// Symmetric rank-2l update dL L^T + L dL^T + shift * I; the derivative of a
/// diag-plus-low-rank preconditioner with respect to one hyperparameter.
struct LowRankDerivOp {
  const Matrix* l = nullptr;
  const Matrix* dl = nullptr;  // may be empty (treated as zero)
  double identity_shift = 0.0;

  Index rows() const { return l->rows(); }

  Vector apply(const Vector& v) const {
    Vector out = identity_shift != 0.0 ? Vector(identity_shift * v) : Vector(Vector::Zero(v.size()));
    if (dl && dl->size() > 0) {
      out.noalias() += (*dl) * (l->transpose() * v);
      out.noalias() += (*l) * (dl->transpose() * v);
    }
    return out;
  }

  double trace() const {
    double t = identity_shift * static_cast<double>(rows());
    if (dl && dl->size() > 0) t += 2.0 * l->cwiseProduct(*dl).sum();
    return t;
  }
};

/// P_hat = sigma^2 I + L L^T with cached Woodbury factorization. Solves cost
/// O(n l) after an O(n l^2) setup; log-determinant and the trace of
/// P^{-1} dP/dtheta come from the matrix inversion and determinant lemmas.
/// Immutable after construction; all operations are safe to call concurrently.
class DiagPlusLowRank {
 public:
  DiagPlusLowRank(double noise_variance, Matrix factor, LowRankKind kind,
                  std::vector<Index> pivots = {})
      : noise_(noise_variance), l_(std::move(factor)), kind_(kind), pivots_(std::move(pivots)) {
    require(noise_ > 0.0 && std::isfinite(noise_), "DiagPlusLowRank: noise variance must be positive");
    if (rank() > 0) {
      Matrix inner = l_.transpose() * l_;
      inner.diagonal().array() += noise_;
      inner_llt_.compute(inner);
      if (inner_llt_.info() != Eigen::Success)
        throw numerical_error("DiagPlusLowRank: inner Cholesky failed (cannot happen for sigma^2 > 0)");
      solve_cache_ = inner_llt_.solve(l_.transpose()).transpose();  // L (sigma^2 I + L^T L)^{-1}
    }
  }

  Index rows() const { return l_.rows(); }
  int rank() const { return static_cast<int>(l_.cols()); }
  double noise_variance() const { return noise_; }
  LowRankKind kind() const { return kind_; }
  const Matrix& factor() const { return l_; }
  const std::vector<Index>& pivots() const { return pivots_; }

  /// P_hat v
  Vector apply(const Vector& v) const {
    Vector out = noise_ * v;
    if (rank() > 0) out.noalias() += l_ * (l_.transpose() * v);
    return out;
  }

  /// P_hat^{-1} v via the matrix inversion lemma:
  /// sigma^{-2} v - sigma^{-2} L (sigma^2 I + L^T L)^{-1} L^T v.
  Vector solve(const Vector& v) const {
    Vector out = v / noise_;
    if (rank() > 0) out.noalias() -= solve_cache_ * (l_.transpose() * v) / noise_;
    return out;
  }

  Matrix solve_matrix(const Matrix& m) const {
    Matrix out = m / noise_;
    if (rank() > 0) out.noalias() -= solve_cache_ * (l_.transpose() * m) / noise_;
    return out;
  }

  /// n log sigma^2 + log det(I + sigma^{-2} L^T L)
  double logdet() const {
    double ld = static_cast<double>(rows()) * std::log(noise_);
    if (rank() > 0)
      ld += 2.0 * inner_llt_.matrixLLT().diagonal().array().log().sum() -
            static_cast<double>(rank()) * std::log(noise_);
    return ld;
  }

  /// tr(P_hat^{-1} dP) for a symmetric operator dP:
  /// sigma^{-2} tr(dP) - sigma^{-2} 1^T [(L (sigma^2 I + L^T L)^{-1}) o (dP L)] 1.
  /// Costs rank() applications of dP plus O(n l^2).
  template <TraceableOperator DOp>
  double trace_inv_deriv(const DOp& dp) const {
    double t = dp.trace() / noise_;
    if (rank() == 0) return t;
    Matrix dpl(rows(), rank());
    for (int c = 0; c < rank(); ++c) dpl.col(c) = dp.apply(l_.col(c));
    return t - solve_cache_.cwiseProduct(dpl).sum() / noise_;
  }

  /// Attach d L / d theta factors, flat hyperparameter order; the noise slot
  /// stays empty since dP/dsigma^2 = I.
  void attach_derivatives(std::vector<Matrix> dfactors, int noise_which) {
    require(static_cast<int>(dfactors.size()) == noise_which + 1,
            "DiagPlusLowRank: derivative factor count mismatch");
    dfactors_ = std::move(dfactors);
    noise_which_ = noise_which;
  }

  bool has_derivatives() const { return !dfactors_.empty(); }

  LowRankDerivOp deriv_op(int which) const {
    require(has_derivatives(), "DiagPlusLowRank: derivative factors not attached");
    require(which >= 0 && which < static_cast<int>(dfactors_.size()),
            "DiagPlusLowRank: hyperparameter index out of range");
    return LowRankDerivOp{&l_, &dfactors_[which], which == noise_which_ ? 1.0 : 0.0};
  }

  /// (dP_hat / d theta_which) v
  Vector deriv_apply(int which, const Vector& v) const { return deriv_op(which).apply(v); }

  double trace_inv_deriv(int which) const { return trace_inv_deriv(deriv_op(which)); }

  Matrix dense() const {
    Matrix p = Matrix::Zero(rows(), rows());
    if (rank() > 0) p.noalias() = l_ * l_.transpose();
    p.diagonal().array() += noise_;
    return p;
  }

 private:
  double noise_;
  Matrix l_;
  LowRankKind kind_;
  std::vector<Index> pivots_;
  Eigen::LLT<Matrix> inner_llt_;
  Matrix solve_cache_;  // L (sigma^2 I + L^T L)^{-1}
  std::vector<Matrix> dfactors_;
  int noise_which_ = -1;
};

inline Vector precond_solve(const DiagPlusLowRank& p, const Vector& v) { return p.solve(v); }
inline double precond_logdet(const DiagPlusLowRank& p) { return p.logdet(); }

template <TraceableOperator DOp>
double precond_trace_inv_deriv(const DiagPlusLowRank& p, const DOp& dp) {
  return p.trace_inv_deriv(dp);
}

/// Exact "preconditioner" wrapping the dense kernel matrix itself. With it
/// the stochastic estimators collapse to their deterministic values; used for
/// verification and small problems.
class ExactPreconditioner {
 public:
  explicit ExactPreconditioner(const KernelOperator& op) {
    khat_ = op.dense_hat();
    llt_.compute(khat_);
    if (llt_.info() != Eigen::Success)
      throw numerical_error("ExactPreconditioner: Cholesky of K_hat failed");
    for (int w = 0; w < op.num_params(); ++w) derivs_.push_back(op.dense_deriv(w));
  }

  Index rows() const { return khat_.rows(); }
  Vector apply(const Vector& v) const { return khat_.selfadjointView<Eigen::Lower>() * v; }
  Vector solve(const Vector& v) const { return llt_.solve(v); }
  Matrix solve_matrix(const Matrix& m) const { return llt_.solve(m); }
  double logdet() const { return 2.0 * llt_.matrixLLT().diagonal().array().log().sum(); }
  Vector deriv_apply(int which, const Vector& v) const {
    return derivs_.at(which).selfadjointView<Eigen::Lower>() * v;
  }
  double trace_inv_deriv(int which) const { return llt_.solve(derivs_.at(which)).trace(); }
  const Matrix& dense() const { return khat_; }

 private:
  Matrix khat_;
  Eigen::LLT<Matrix> llt_;
  std::vector<Matrix> derivs_;
};

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// Greedy pivoted partial Cholesky of the noise-free kernel matrix. At each
/// step the largest remaining diagonal entry is selected (ties broken by
/// lowest index) and the corresponding Schur-complement column, scaled by its
/// pivot root, is appended. Stops early once the maximum remaining diagonal
/// drops to diag_tol, reporting the achieved rank. The maintained remaining
/// diagonal (whose sum is the residual trace) is returned on request.
inline DiagPlusLowRank pivoted_cholesky(const KernelAccessor& k, int rank, double diag_tol,
                                        double noise_variance,
                                        Vector* remaining_diag = nullptr) {
  const Index n = k.n;
  require(rank >= 0 && rank <= n, "pivoted_cholesky: rank must be in [0, n]");
  Vector d = k.diagonal();
  const double kmax = d.maxCoeff();
  Matrix l(n, rank);
  std::vector<Index> pivots;
  int step = 0;
  for (; step < rank; ++step) {
    Index p = 0;
    for (Index i = 1; i < n; ++i)
      if (d[i] > d[p]) p = i;
    if (d[p] < -1e-10 * kmax)
      throw numerical_error("pivoted_cholesky: negative pivot " + std::to_string(d[p]) +
                            " at step " + std::to_string(step) + "; matrix not PSD");
    if (d[p] <= diag_tol) break;
    Vector c = k.column(p);
    if (step > 0) c.noalias() -= l.leftCols(step) * l.row(p).head(step).transpose();
    l.col(step) = c / std::sqrt(d[p]);
    d -= l.col(step).cwiseAbs2();
    pivots.push_back(p);
  }
  l.conservativeResize(n, step);
  if (remaining_diag) *remaining_diag = d;
  return DiagPlusLowRank(noise_variance, std::move(l), LowRankKind::PivotedCholesky,
                         std::move(pivots));
}

/// dL/dtheta for a pivoted Cholesky factor with the pivot set frozen: the
/// recursion defining each column is differentiated with dK columns supplied
/// by the kernel operator.
inline std::vector<Matrix> pivoted_cholesky_deriv_factors(const KernelOperator& op,
                                                          const DiagPlusLowRank& p) {
  const Index n = p.rows();
  const int rank = p.rank();
  const auto& l = p.factor();
  const auto& pivots = p.pivots();
  require(static_cast<int>(pivots.size()) == rank,
          "pivoted_cholesky_deriv_factors: preconditioner has no pivot record");
  std::vector<Matrix> dfactors(op.num_params());
  for (int which = 0; which < op.num_params(); ++which) {
    if (which == noise_index(op.dim())) continue;  // dP/dsigma^2 = I, no factor part
    Matrix dl(n, rank);
    for (int s = 0; s < rank; ++s) {
      const Index piv = pivots[s];
      Vector dc = op.kernel_deriv_column(which, piv);
      if (s > 0) {
        dc.noalias() -= dl.leftCols(s) * l.row(piv).head(s).transpose();
        dc.noalias() -= l.leftCols(s) * dl.row(piv).head(s).transpose();
      }
      const double pivot_root = l(piv, s);
      const double dd = dc[piv];
      dl.col(s) = dc / pivot_root - l.col(s) * (dd / (2.0 * pivot_root * pivot_root));
    }
    dfactors[which] = std::move(dl);
  }
  return dfactors;
}

/// Convenience: pivoted Cholesky preconditioner with derivative factors
/// attached (pivots frozen).
inline DiagPlusLowRank pivoted_cholesky_with_derivatives(const KernelOperator& op, int rank,
                                                         double diag_tol = 0.0) {
  DiagPlusLowRank p =
      pivoted_cholesky(make_kernel_accessor(op), rank, diag_tol, op.params().noise_variance());
  p.attach_derivatives(pivoted_cholesky_deriv_factors(op, p), noise_index(op.dim()));
  return p;
}

namespace detail {
// Top-rank eigenpairs of a symmetric matrix, descending, negatives within
// round-off clamped to zero.
inline Matrix top_eig_factor(const Matrix& sym, int rank, const char* who) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw numerical_error(std::string(who) + ": eigensolver failed");
  const Vector& lam = es.eigenvalues();  // ascending
  const double lmax = lam.cwiseAbs().maxCoeff();
  if (lam.minCoeff() < -1e-10 * lmax)
    throw numerical_error(std::string(who) + ": eigenvalue " + std::to_string(lam.minCoeff()) +
                          " below -1e-10 * lambda_max; matrix not PSD");
  const Index n = sym.rows();
  Matrix l(n, rank);
  for (int c = 0; c < rank; ++c) {
    const Index idx = n - 1 - c;
    l.col(c) = es.eigenvectors().col(idx) * std::sqrt(std::max(lam[idx], 0.0));
  }
  return l;
}
}  // namespace detail

/// L = V_l Lambda_l^{1/2} from the top-l eigenpairs of a dense PSD matrix;
/// the optimal rank-l approximation in Frobenius norm.
inline DiagPlusLowRank truncated_svd_precond(const Matrix& k, int rank, double noise_variance) {
  require(k.rows() == k.cols(), "truncated_svd_precond: matrix must be square");
  require(rank >= 0 && rank <= k.rows(), "truncated_svd_precond: rank must be in [0, n]");
  return DiagPlusLowRank(noise_variance, detail::top_eig_factor(k, rank, "truncated_svd_precond"),
                         LowRankKind::TruncatedSVD);
}

/// Sketch-then-eigendecompose randomized SVD: project onto the range of K G
/// for an n x s Gaussian sketch G, eigendecompose the projected s x s matrix,
/// keep the top l pairs.
inline DiagPlusLowRank randomized_svd_precond(const Matrix& k, int rank, int sketch,
                                              std::uint64_t seed, double noise_variance) {
  const Index n = k.rows();
  require(k.rows() == k.cols(), "randomized_svd_precond: matrix must be square");
  require(sketch >= rank, "randomized_svd_precond: sketch size must be >= rank");
  require(sketch <= n, "randomized_svd_precond: sketch size must be <= n");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix g(n, sketch);
  for (Index i = 0; i < n; ++i)
    for (int j = 0; j < sketch; ++j) g(i, j) = gauss(rng);
  const Matrix y = k.selfadjointView<Eigen::Lower>() * g;
  Eigen::HouseholderQR<Matrix> qr(y);
  const Matrix q = qr.householderQ() * Matrix::Identity(n, sketch);
  Matrix b = q.transpose() * (k.selfadjointView<Eigen::Lower>() * q);
  b = ((b + b.transpose()) / 2.0).eval();
  return DiagPlusLowRank(noise_variance,
                         q * detail::top_eig_factor(b, rank, "randomized_svd_precond"),
                         LowRankKind::RandomizedSVD);
}

enum class NystroemSampling { Uniform, DiagonalWeighted };

/// Randomized Nystroem approximation C W_l^+ C^T from s columns sampled
/// without replacement (uniformly or proportionally to K_ii^2), folded into
/// factor form through an eigendecomposition of the s x s core with a
/// pseudo-inverse cutoff of 1e-10 lambda_max.
inline DiagPlusLowRank nystroem_precond(const KernelAccessor& k, int rank, int samples,
                                        NystroemSampling sampling, std::uint64_t seed,
                                        double noise_variance) {
  const Index n = k.n;
  require(samples >= rank, "nystroem_precond: samples must be >= rank");
  require(samples <= n, "nystroem_precond: samples must be <= n");
  require(rank >= 1, "nystroem_precond: rank must be >= 1");

  std::mt19937_64 rng(seed);
  std::vector<Index> chosen;
  if (sampling == NystroemSampling::Uniform) {
    std::vector<Index> all(n);
    std::iota(all.begin(), all.end(), Index{0});
    for (int i = 0; i < samples; ++i) {  // partial Fisher-Yates
      std::uniform_int_distribution<Index> pick(i, n - 1);
      std::swap(all[i], all[pick(rng)]);
      chosen.push_back(all[i]);
    }
  } else {
    Vector diag = k.diagonal();
    Vector w = diag.cwiseAbs2();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < samples; ++i) {
      const double total = w.sum();
      if (total <= 0.0) throw numerical_error("nystroem_precond: sampled weights vanished");
      double u = unif(rng) * total;
      Index pick = 0;
      for (; pick < n - 1; ++pick) {
        u -= w[pick];
        if (u <= 0.0) break;
      }
      chosen.push_back(pick);
      w[pick] = 0.0;  // without replacement
    }
  }

  Matrix c(n, samples);
  for (int i = 0; i < samples; ++i) c.col(i) = k.column(chosen[i]);
  Matrix core(samples, samples);
  for (int a = 0; a < samples; ++a)
    for (int b = 0; b < samples; ++b) core(a, b) = c(chosen[a], b);
  core = ((core + core.transpose()) / 2.0).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> es(core);
  if (es.info() != Eigen::Success) throw numerical_error("nystroem_precond: core eigensolver failed");
  const Vector& lam = es.eigenvalues();
  const double lmax = lam.maxCoeff();
  if (!(lmax > 0.0)) throw numerical_error("nystroem_precond: sampled core is zero");
  const double cutoff = 1e-10 * lmax;
  int kept = 0;
  Matrix l(n, rank);
  for (int i = 0; i < rank && kept < rank; ++i) {
    const Index idx = samples - 1 - i;
    if (lam[idx] <= cutoff) break;
    l.col(kept++) = (c * es.eigenvectors().col(idx)) / std::sqrt(lam[idx]);
  }
  l.conservativeResize(n, kept);
  return DiagPlusLowRank(noise_variance, std::move(l), LowRankKind::Nystroem);
}

/// Random Fourier features: L columns sqrt(2 o^2 / l) cos(X w_k + b_k) with
/// frequencies drawn from the kernel's spectral density scaled by the
/// lengthscales, so E[L L^T] = K. Frequencies are frozen per construction;
/// derivative factors differentiate the feature map at fixed frequencies.
inline DiagPlusLowRank rff_precond(const Matrix& x, const KernelSpec& spec,
                                   const Hyperparameters& params, int features,
                                   std::uint64_t seed) {
  params.validate();
  require(features >= 1, "rff_precond: need at least one feature");
  require(x.cols() == params.dim(), "rff_precond: data dimension mismatch");
  double nu = 0.0;
  switch (spec.family) {
    case KernelFamily::RBF: break;
    case KernelFamily::Matern12: nu = 0.5; break;
    case KernelFamily::Matern32: nu = 1.5; break;
    case KernelFamily::Matern52: nu = 2.5; break;
    default:
      throw input_error("rff_precond: no sampled spectral density for family " +
                        family_name(spec.family));
  }

  const Index n = x.rows();
  const int d = params.dim();
  const Vector ls = params.lengthscales();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix omega(features, d);
  for (int kf = 0; kf < features; ++kf) {
    for (int j = 0; j < d; ++j) omega(kf, j) = gauss(rng) / ls[j];
    if (nu > 0.0) {
      std::chi_squared_distribution<double> chi2(2.0 * nu);
      omega.row(kf) *= std::sqrt(2.0 * nu / chi2(rng));
    }
  }
  Vector offsets(features);
  std::uniform_real_distribution<double> unif(0.0, 2.0 * M_PI);
  for (int kf = 0; kf < features; ++kf) offsets[kf] = unif(rng);

  const double o = params.outputscale();
  const double amp = std::sqrt(2.0 * o * o / features);
  Matrix arg = x * omega.transpose();
  arg.rowwise() += offsets.transpose();
  Matrix l = amp * arg.array().cos().matrix();

  DiagPlusLowRank p(params.noise_variance(), l, LowRankKind::RFF);
  // derivative factors at frozen frequencies
  Matrix sin_arg = arg.array().sin().matrix();
  std::vector<Matrix> dfactors(params.num_params());
  dfactors[kOutputscaleIndex] = l / o;
  for (int j = 0; j < d; ++j) {
    // d arg / d l_j = -x_j w_kj / l_j since w_kj carries a 1/l_j factor
    Matrix darg = (x.col(j) * omega.col(j).transpose()) / ls[j];
    dfactors[lengthscale_index(j)] = amp * sin_arg.cwiseProduct(darg);
  }
  p.attach_derivatives(std::move(dfactors), noise_index(d));
  return p;
}

/// Deterministic quadrature Fourier features for the one-dimensional RBF
/// kernel: Gauss-Hermite nodes of the Gaussian spectral density give paired
/// cos/sin features. Expects data rescaled to [0, 1]; no randomness involved.
inline DiagPlusLowRank qff_precond(const Matrix& x, const KernelSpec& spec,
                                   const Hyperparameters& params, int features) {
  params.validate();
  require(x.cols() == 1, "qff_precond: only one-dimensional data is supported");
  require(spec.family == KernelFamily::RBF, "qff_precond: only the RBF spectral density is covered");
  require(features >= 2 && features % 2 == 0, "qff_precond: feature count must be even and >= 2");

  const int m = features / 2;
  // Golub-Welsch on the Hermite recurrence: nodes/weights from the Jacobi matrix.
  Vector jdiag = Vector::Zero(m);
  Vector jsub(m > 1 ? m - 1 : 0);
  for (int i = 1; i < m; ++i) jsub[i - 1] = std::sqrt(i / 2.0);
  Eigen::SelfAdjointEigenSolver<Matrix> es;
  es.computeFromTridiagonal(jdiag, jsub);
  if (es.info() != Eigen::Success) throw numerical_error("qff_precond: Hermite eigensolver failed");
  const Vector nodes = es.eigenvalues();
  // w_i / sqrt(pi) = (first eigenvector component)^2; these sum to one, so
  // the reconstructed diagonal is exactly o^2.
  const Vector relw = es.eigenvectors().row(0).transpose().cwiseAbs2();

  const Index n = x.rows();
  const double o = params.outputscale();
  const double lscale = params.lengthscales()[0];
  Matrix l(n, features), dl(n, features);
  for (int i = 0; i < m; ++i) {
    const double a = o * std::sqrt(relw[i]);
    const Vector arg = (std::sqrt(2.0) * nodes[i] / lscale) * x.col(0);
    const Vector darg_dl = -arg / lscale;
    l.col(2 * i) = a * arg.array().cos();
    l.col(2 * i + 1) = a * arg.array().sin();
    dl.col(2 * i) = -a * arg.array().sin().matrix().cwiseProduct(darg_dl);
    dl.col(2 * i + 1) = a * arg.array().cos().matrix().cwiseProduct(darg_dl);
  }

  DiagPlusLowRank p(params.noise_variance(), l, LowRankKind::QFF);
  std::vector<Matrix> dfactors(params.num_params());
  dfactors[kOutputscaleIndex] = l / o;
  dfactors[lengthscale_index(0)] = std::move(dl);
  p.attach_derivatives(std::move(dfactors), noise_index(1));
  return p;
}

// ---------------------------------------------------------------------------
// Quality diagnostics
// ---------------------------------------------------------------------------

struct QualityCurve {
  std::vector<int> ranks;
  std::vector<double> rel_frobenius;  // ||K_hat - P_hat_l||_F / ||K_hat||_F
};

/// Relative Frobenius error of a preconditioner family against the dense
/// matrix, per rank.
inline QualityCurve quality_curve(const Matrix& khat,
                                  const std::function<DiagPlusLowRank(int)>& builder,
                                  const std::vector<int>& ranks, Index dense_limit = 4096) {
  require(khat.rows() == khat.cols(), "quality_curve: matrix must be square");
  require(khat.rows() <= dense_limit, "quality_curve: n exceeds the dense limit");
  QualityCurve curve;
  const double denom = khat.norm();
  for (int r : ranks) {
    const DiagPlusLowRank p = builder(r);
    curve.ranks.push_back(r);
    curve.rel_frobenius.push_back((khat - p.dense()).norm() / denom);
  }
  return curve;
}

}  // namespace gpkrylov

#endif
