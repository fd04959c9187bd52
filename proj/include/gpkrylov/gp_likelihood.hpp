#ifndef GPKRYLOV_GP_LIKELIHOOD_HPP
#define GPKRYLOV_GP_LIKELIHOOD_HPP

#include <Eigen/Dense>

#include <cmath>
#include <utility>
#include <vector>

#include "gpkrylov/common.hpp"
#include "gpkrylov/kernels.hpp"
#include "gpkrylov/krylov.hpp"
#include "gpkrylov/trace_estimation.hpp"

namespace gpkrylov {

/// Preconditioner surface needed by the likelihood estimators: solves,
/// log-determinant and hyperparameter derivatives by flat index.
template <typename P>
concept MllPreconditioner = SolveOperator<P> && requires(const P& p, int w, const Vector& v) {
  { p.logdet() } -> std::convertible_to<double>;
  { p.deriv_apply(w, v) } -> std::convertible_to<Vector>;
  { p.trace_inv_deriv(w) } -> std::convertible_to<double>;
};

struct MllConfig {
  CgConfig solver;
  // Reuse the forward probe batch for the backward pass. Halves solver work
  // (the noise derivative shares the forward solves outright); switching it
  // off draws an independent batch derived from the probe seed.
  bool share_probes = true;
};

/// Stochastic estimate of the log-marginal likelihood and its gradient.
struct MllEvaluation {
  double value = 0.0;
  Vector gradient;  // d L / d log(theta), order: outputscale, lengthscales, noise
  int solve_iterations = 0;
  std::vector<double> forward_gammas;
  std::vector<std::vector<double>> backward_gammas;  // per hyperparameter
  std::uint64_t probe_seed = 0;
  // estimator telemetry
  double value_sample_variance = 0.0;
  std::vector<int> forward_cg_iterations;
  int total_cg_iterations = 0;
};

/// Runs the forward pass (and optionally the backward pass) sharing the
/// linear solve of K_hat u = y between the two. Probes are reused across the
/// passes when cfg.share_probes is set.
template <MllPreconditioner P>
MllEvaluation evaluate_mll(const Vector& y, const KernelOperator& k, const P& prec,
                           const ProbeBatch& batch, const MllConfig& cfg,
                           bool with_gradient = true) {
  const Index n = k.rows();
  require(y.size() == n, "evaluate_mll: label length does not match operator");

  MllEvaluation out;
  out.probe_seed = batch.seed;

  const CgResult u_res = pcg_solve(k, y, prec, cfg.solver);
  out.solve_iterations = u_res.iterations_used;
  out.total_cg_iterations = u_res.iterations_used;
  const Vector& u = u_res.solution;

  const VrEstimate fwd = vr_logdet(k, prec, batch, cfg.solver);
  out.forward_gammas = fwd.per_probe;
  out.forward_cg_iterations = fwd.cg_iterations;
  for (int it : fwd.cg_iterations) out.total_cg_iterations += it;
  out.value_sample_variance = fwd.sample_variance;
  out.value = -0.5 * (y.dot(u) + fwd.estimate +
                      static_cast<double>(n) * std::log(2.0 * M_PI));

  if (!with_gradient) return out;

  ProbeBatch backward_batch;
  const ProbeBatch* bwd = &batch;
  if (!cfg.share_probes) {
    backward_batch = make_probes(n, batch.count, mix_seed(batch.seed, 0xb2dULL));
    bwd = &backward_batch;
  }

  const int np = k.num_params();
  const int noise_w = noise_index(k.dim());
  out.gradient.resize(np);
  out.backward_gammas.resize(np);
  for (int which = 0; which < np; ++which) {
    // The noise derivative of K_hat is the identity, so its probe solves are
    // exactly the forward solves when the batch is shared.
    const Matrix* cached = (which == noise_w && cfg.share_probes) ? &fwd.probe_solutions : nullptr;
    const VrEstimate resid = detail::trace_residual(
        k, [&k, which](const Vector& v) { return k.deriv_apply(which, v); }, prec,
        [&prec, which](const Vector& v) { return prec.deriv_apply(which, v); }, *bwd, cfg.solver,
        cached);
    for (int it : resid.cg_iterations) out.total_cg_iterations += it;
    out.backward_gammas[which] = resid.per_probe;
    const double tau = prec.trace_inv_deriv(which) + resid.stochastic_term;
    const double quad = u.dot(k.deriv_apply(which, u));
    const double raw = 0.5 * (quad - tau);
    out.gradient[which] = raw * k.params().raw_value(which);  // chain rule into log-space
  }
  return out;
}

template <MllPreconditioner P>
double mll_estimate(const Vector& y, const KernelOperator& k, const P& prec,
                    const ProbeBatch& batch, const CgConfig& solver) {
  return evaluate_mll(y, k, prec, batch, MllConfig{solver, true}, false).value;
}

template <MllPreconditioner P>
Vector mll_gradient(const Vector& y, const KernelOperator& k, const P& prec,
                    const ProbeBatch& batch, const CgConfig& solver) {
  return evaluate_mll(y, k, prec, batch, MllConfig{solver, true}, true).gradient;
}

struct ExactMll {
  double value = 0.0;
  Vector gradient;  // log-space
};

/// Dense reference: exact log-marginal likelihood and gradient by Cholesky
/// factorization. The test oracle for the stochastic path.
inline ExactMll mll_exact(const Vector& y, const Matrix& x, const KernelSpec& spec,
                          const Hyperparameters& params) {
  KernelOperator k(spec, x, params, StorageMode::Dense);
  const Index n = k.rows();
  require(y.size() == n, "mll_exact: label length does not match data");
  const Matrix khat = k.dense_hat();
  Eigen::LLT<Matrix> llt(khat);
  if (llt.info() != Eigen::Success)
    throw numerical_error("mll_exact: Cholesky factorization failed; consider a larger noise variance");
  const Vector alpha = llt.solve(y);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();

  ExactMll out;
  out.value = -0.5 * (y.dot(alpha) + logdet + static_cast<double>(n) * std::log(2.0 * M_PI));
  out.gradient.resize(k.num_params());
  for (int which = 0; which < k.num_params(); ++which) {
    const Matrix dk = k.dense_deriv(which);
    const double quad = alpha.dot(dk.selfadjointView<Eigen::Lower>() * alpha);
    const double trace = llt.solve(dk).trace();
    out.gradient[which] = 0.5 * (quad - trace) * params.raw_value(which);
  }
  return out;
}

}  // namespace gpkrylov

#endif
