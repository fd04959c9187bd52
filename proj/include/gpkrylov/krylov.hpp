#ifndef GPKRYLOV_KRYLOV_HPP
#define GPKRYLOV_KRYLOV_HPP

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gpkrylov/common.hpp"

namespace gpkrylov {

struct CgConfig {
  int max_iters = 100;
  double rel_tol = 1e-6;  // on the preconditioned residual 2-norm
  bool collect_tridiag = false;

  void validate() const {
    require(max_iters >= 1, "CgConfig: max_iters must be >= 1");
    require(rel_tol > 0.0 && rel_tol < 1.0, "CgConfig: rel_tol must be in (0, 1)");
  }
};

struct SymTridiagonal {
  Vector diag;
  Vector subdiag;  // one entry shorter than diag

  Index size() const { return diag.size(); }
};

struct CgResult {
  Vector solution;
  int iterations_used = 0;
  bool converged = false;
  std::vector<double> residual_history;  // ||P^{-1}(b - A x_k)|| per iteration
  std::optional<SymTridiagonal> tridiag;
};

/// Preconditioned conjugate gradients for SPD A. Only applications of P^{-1}
/// are used, never P^{-1/2}. With collect_tridiag the Lanczos tridiagonal of
/// the preconditioned system is rebuilt from the CG step lengths alpha_i and
/// conjugacy corrections beta_i:
///   T(i,i)   = 1/alpha_i + beta_{i-1}/alpha_{i-1}   (no beta term at i = 1)
///   T(i,i+1) = sqrt(beta_i)/alpha_i
template <ApplyOperator A, SolveOperator P>
CgResult pcg_solve(const A& a, const Vector& b, const P& prec, const CgConfig& cfg,
                   const Vector* x0 = nullptr) {
  cfg.validate();
  const Index n = a.rows();
  require(b.size() == n, "pcg_solve: rhs length does not match operator");

  CgResult res;
  res.solution = x0 ? *x0 : Vector::Zero(n);

  Vector r = b;
  if (x0 && x0->squaredNorm() > 0.0) r -= a.apply(res.solution);
  Vector z = prec.solve(r);
  const double norm0 = (x0 && x0->squaredNorm() > 0.0) ? prec.solve(b).norm() : z.norm();
  if (norm0 == 0.0) {
    res.converged = true;
    return res;
  }

  Vector p = z;
  double rz = r.dot(z);
  double alpha_prev = 0.0, beta_prev = 0.0;

  std::vector<double> tdiag, tsub;
  if (cfg.collect_tridiag) {
    tdiag.reserve(cfg.max_iters);
    tsub.reserve(cfg.max_iters);
  }

  for (int k = 1; k <= cfg.max_iters; ++k) {
    const Vector ap = a.apply(p);
    const double pap = p.dot(ap);
    const double alpha = rz / pap;
    if (!std::isfinite(alpha) || alpha <= 0.0)
      throw solver_error("pcg_solve: breakdown at iteration " + std::to_string(k) +
                         " (alpha = " + std::to_string(alpha) +
                         "); operator or preconditioner not positive definite");

    if (cfg.collect_tridiag) {
      double d = 1.0 / alpha;
      if (k > 1) {
        d += beta_prev / alpha_prev;
        tsub.push_back(std::sqrt(beta_prev) / alpha_prev);
      }
      tdiag.push_back(d);
    }

    res.solution += alpha * p;
    r -= alpha * ap;
    z = prec.solve(r);
    const double rz_new = r.dot(z);
    if (!std::isfinite(rz_new) || rz_new < 0.0)
      throw solver_error("pcg_solve: breakdown at iteration " + std::to_string(k) +
                         " (r'z = " + std::to_string(rz_new) + ")");

    const double pres = z.norm();
    res.residual_history.push_back(pres);
    res.iterations_used = k;

    if (pres <= cfg.rel_tol * norm0) {
      res.converged = true;
      break;
    }
    if (rz_new == 0.0) {  // exact convergence below the tolerance check
      res.converged = true;
      break;
    }

    const double beta = rz_new / rz;
    p = z + beta * p;
    beta_prev = beta;
    alpha_prev = alpha;
    rz = rz_new;
  }

  if (cfg.collect_tridiag) {
    SymTridiagonal t;
    t.diag = Eigen::Map<const Vector>(tdiag.data(), static_cast<Index>(tdiag.size()));
    t.subdiag = Eigen::Map<const Vector>(tsub.data(), static_cast<Index>(tsub.size()));
    res.tridiag = std::move(t);
  }
  return res;
}

/// Independent CG solves for the columns of B. Columns run concurrently and
/// each result is bitwise identical to the corresponding pcg_solve call.
template <ApplyOperator A, SolveOperator P>
std::vector<CgResult> batched_pcg(const A& a, const Matrix& b, const P& prec, const CgConfig& cfg) {
  cfg.validate();
  require(b.rows() == a.rows(), "batched_pcg: rhs rows do not match operator");
  const Index r = b.cols();
  std::vector<CgResult> results(static_cast<std::size_t>(r));
  std::vector<std::string> errors(static_cast<std::size_t>(r));

#pragma omp parallel for schedule(dynamic)
  for (Index c = 0; c < r; ++c) {
    try {
      results[c] = pcg_solve(a, Vector(b.col(c)), prec, cfg);
    } catch (const std::exception& e) {
      errors[c] = e.what();
    }
  }
  for (Index c = 0; c < r; ++c)
    if (!errors[c].empty())
      throw solver_error("batched_pcg: column " + std::to_string(c) + ": " + errors[c]);
  return results;
}

}  // namespace gpkrylov

#endif
