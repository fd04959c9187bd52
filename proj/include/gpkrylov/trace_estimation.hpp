#ifndef GPKRYLOV_TRACE_ESTIMATION_HPP
#define GPKRYLOV_TRACE_ESTIMATION_HPP

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gpkrylov/common.hpp"
#include "gpkrylov/krylov.hpp"

namespace gpkrylov {

/// Normalized Rademacher probe vectors: raw entries are +-1, so every column
/// has unit 2-norm with entries +-1/sqrt(n). A fixed seed reproduces the
/// batch bitwise (the mt19937_64 stream is standardized).
struct ProbeBatch {
  Matrix probes;  // n x count
  std::uint64_t seed = 0;
  int count = 0;
};

inline ProbeBatch make_probes(Index n, int count, std::uint64_t seed) {
  require(n >= 1, "make_probes: n must be >= 1");
  require(count >= 1, "make_probes: need at least one probe");
  std::mt19937_64 rng(seed);
  const double inv = 1.0 / std::sqrt(static_cast<double>(n));
  Matrix z(n, count);
  for (int c = 0; c < count; ++c)
    for (Index i = 0; i < n; ++i) z(i, c) = (rng() & 1ULL) ? inv : -inv;
  return ProbeBatch{std::move(z), seed, count};
}

struct HutchinsonResult {
  double estimate = 0.0;            // (n/l) sum_i z_i' A z_i
  std::vector<double> per_probe;    // the n * q_i values
  double sample_variance = 0.0;     // unbiased variance of per_probe
};

namespace detail {
inline double unbiased_variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}
}  // namespace detail

/// Hutchinson's trace estimator over a probe batch. The evaluator receives
/// one probe column and returns the quadratic form z' A z.
template <typename F>
HutchinsonResult hutchinson(F&& quadratic_form, const ProbeBatch& batch) {
  const Index n = batch.probes.rows();
  HutchinsonResult res;
  res.per_probe.resize(batch.count);
  for (int i = 0; i < batch.count; ++i) {
    const double q = quadratic_form(Vector(batch.probes.col(i)));
    if (!std::isfinite(q))
      throw numerical_error("hutchinson: non-finite quadratic form for probe " + std::to_string(i));
    res.per_probe[i] = static_cast<double>(n) * q;
  }
  for (double v : res.per_probe) res.estimate += v;
  res.estimate /= static_cast<double>(batch.count);
  res.sample_variance = detail::unbiased_variance(res.per_probe);
  return res;
}

/// One Lanczos quadrature term: Ritz values as nodes, squared first
/// eigenvector components as weights.
struct SlqTerm {
  int probe_index = 0;
  Vector nodes;
  Vector weights;
  double value = 0.0;  // gamma = sum_j w_j f(lambda_j)
  int clamped_nodes = 0;
};

/// Gauss quadrature of a tridiagonal Lanczos matrix. Nodes below clamp_floor
/// are clamped before applying f, guarding log against round-off-negative
/// Ritz values. Passing no clamp_floor uses 1e-12 times the largest node.
inline SlqTerm slq_quadrature(const SymTridiagonal& t, const std::function<double(double)>& f,
                              std::optional<double> clamp_floor = std::nullopt,
                              int probe_index = 0) {
  SlqTerm term;
  term.probe_index = probe_index;
  if (t.size() == 0) return term;
  Eigen::SelfAdjointEigenSolver<Matrix> es;
  es.computeFromTridiagonal(t.diag, t.subdiag);
  if (es.info() != Eigen::Success) throw numerical_error("slq_quadrature: eigensolver failed");
  term.nodes = es.eigenvalues();
  term.weights = es.eigenvectors().row(0).transpose().cwiseAbs2();
  const double floor_value =
      clamp_floor ? *clamp_floor : 1e-12 * term.nodes.cwiseAbs().maxCoeff();
  for (Index j = 0; j < term.nodes.size(); ++j) {
    double node = term.nodes[j];
    if (node < floor_value) {
      node = floor_value;
      ++term.clamped_nodes;
    }
    term.value += term.weights[j] * f(node);
  }
  return term;
}

/// Output of the variance-reduced estimators: a deterministic preconditioner
/// term plus a stochastic residual trace, with per-probe diagnostics.
struct VrEstimate {
  double estimate = 0.0;
  double deterministic_term = 0.0;
  double stochastic_term = 0.0;     // (n/l) sum gamma_i
  std::vector<double> per_probe;    // gamma_i
  double sample_variance = 0.0;     // unbiased variance of n * gamma_i
  std::vector<int> cg_iterations;
  int clamped_nodes = 0;
  Matrix probe_solutions;           // K_hat^{-1} z_i per column (forward pass only)
};

namespace detail {

template <typename T>
concept LogdetPreconditioner = SolveOperator<T> && requires(const T& p) {
  { p.logdet() } -> std::convertible_to<double>;
};

inline void finish_estimate(VrEstimate& est, Index n, int count) {
  est.stochastic_term = 0.0;
  for (double g : est.per_probe) est.stochastic_term += g;
  est.stochastic_term *= static_cast<double>(n) / static_cast<double>(count);
  est.estimate = est.deterministic_term + est.stochastic_term;
  std::vector<double> scaled(est.per_probe.size());
  for (std::size_t i = 0; i < scaled.size(); ++i)
    scaled[i] = static_cast<double>(n) * est.per_probe[i];
  est.sample_variance = unbiased_variance(scaled);
}

}  // namespace detail

/// Estimate of log det(K_hat) = log det(P_hat) + tr(Delta_log). Each probe is
/// sent through preconditioned CG; the recovered tridiagonal belongs to the
/// preconditioned system, so its log-quadrature estimates the residual trace.
template <ApplyOperator A, detail::LogdetPreconditioner P>
VrEstimate vr_logdet(const A& k, const P& prec, const ProbeBatch& batch, const CgConfig& cfg) {
  const Index n = k.rows();
  require(batch.probes.rows() == n, "vr_logdet: probe length does not match operator");
  CgConfig solver_cfg = cfg;
  solver_cfg.collect_tridiag = true;

  VrEstimate est;
  est.deterministic_term = prec.logdet();
  est.per_probe.resize(batch.count);
  est.cg_iterations.resize(batch.count);
  est.probe_solutions.resize(n, batch.count);
  std::vector<int> clamped(batch.count, 0);
  std::vector<std::string> errors(batch.count);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < batch.count; ++i) {
    try {
      const CgResult res = pcg_solve(k, Vector(batch.probes.col(i)), prec, solver_cfg);
      const SlqTerm term =
          slq_quadrature(*res.tridiag, [](double x) { return std::log(x); }, std::nullopt, i);
      est.per_probe[i] = term.value;
      est.cg_iterations[i] = res.iterations_used;
      est.probe_solutions.col(i) = res.solution;
      clamped[i] = term.clamped_nodes;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (int i = 0; i < batch.count; ++i)
    if (!errors[i].empty())
      throw numerical_error("vr_logdet: probe " + std::to_string(i) + ": " + errors[i]);
  for (int c : clamped) est.clamped_nodes += c;
  detail::finish_estimate(est, n, batch.count);
  return est;
}

namespace detail {

/// Stochastic residual (n/l) sum_i z_i'(w_i - wt_i) with w_i the CG solve of
/// K_hat w = dK z_i and wt_i = P^{-1} dP z_i. Pass cached_w to reuse already
/// computed solutions (the noise derivative reuses the forward solves).
template <ApplyOperator A, SolveOperator P>
VrEstimate trace_residual(const A& k, const std::function<Vector(const Vector&)>& dk_apply,
                          const P& prec, const std::function<Vector(const Vector&)>& dp_apply,
                          const ProbeBatch& batch, const CgConfig& cfg,
                          const Matrix* cached_w = nullptr) {
  const Index n = k.rows();
  VrEstimate est;
  est.per_probe.resize(batch.count);
  est.cg_iterations.resize(batch.count);
  std::vector<std::string> errors(batch.count);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < batch.count; ++i) {
    try {
      const Vector z = batch.probes.col(i);
      Vector w;
      if (cached_w) {
        w = cached_w->col(i);
      } else {
        const CgResult res = pcg_solve(k, dk_apply(z), prec, cfg);
        w = res.solution;
        est.cg_iterations[i] = res.iterations_used;
      }
      const Vector wt = prec.solve(dp_apply(z));
      est.per_probe[i] = z.dot(w - wt);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (int i = 0; i < batch.count; ++i)
    if (!errors[i].empty())
      throw numerical_error("trace residual: probe " + std::to_string(i) + ": " + errors[i]);
  finish_estimate(est, n, batch.count);
  return est;
}

}  // namespace detail

/// Estimate of tr(K_hat^{-1} dK) = tr(P_hat^{-1} dP) + tr(Delta_invd).
template <ApplyOperator A, ApplyOperator DK, typename P, TraceableOperator DP>
  requires SolveOperator<P> && requires(const P& p, const DP& dp) {
    { p.trace_inv_deriv(dp) } -> std::convertible_to<double>;
  }
VrEstimate vr_trace_inv_deriv(const A& k, const DK& dk, const P& prec, const DP& dp,
                              const ProbeBatch& batch, const CgConfig& cfg) {
  require(batch.probes.rows() == k.rows(), "vr_trace_inv_deriv: probe length mismatch");
  VrEstimate est = detail::trace_residual(
      k, [&dk](const Vector& v) { return dk.apply(v); }, prec,
      [&dp](const Vector& v) { return dp.apply(v); }, batch, cfg);
  est.deterministic_term = prec.trace_inv_deriv(dp);
  est.estimate = est.deterministic_term + est.stochastic_term;
  return est;
}

}  // namespace gpkrylov

#endif
