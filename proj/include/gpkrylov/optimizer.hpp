#ifndef GPKRYLOV_OPTIMIZER_HPP
#define GPKRYLOV_OPTIMIZER_HPP

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gpkrylov/common.hpp"
#include "gpkrylov/dataset.hpp"
#include "gpkrylov/gp_likelihood.hpp"

namespace gpkrylov {

enum class OptMethod { LBFGS, Adam };

struct OptOptions {
  OptMethod method = OptMethod::LBFGS;
  int max_steps = 20;
  int lbfgs_memory = 10;
  double armijo_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  double adam_lr = 0.1;
  int early_stop_patience = 3;      // accepted steps without validation improvement
  double validation_fraction = 0.16;  // used by callers when splitting data
  double grad_tol = 1e-8;
  int max_line_search = 20;

  void validate() const {
    require(max_steps >= 1, "OptOptions: max_steps must be >= 1");
    require(armijo_c1 > 0.0 && armijo_c1 < wolfe_c2 && wolfe_c2 < 1.0,
            "OptOptions: need 0 < c1 < c2 < 1");
    require(lbfgs_memory >= 1, "OptOptions: lbfgs_memory must be >= 1");
    require(early_stop_patience >= 1, "OptOptions: early_stop_patience must be >= 1");
  }
};

/// One row of the per-evaluation log; every objective (value, gradient)
/// computation appears here, line-search trials included.
struct EvalRecord {
  int step = 0;
  double f = 0.0;
  double grad_norm = 0.0;
};

struct StepRecord {
  Vector theta;  // iterate after the step (log-space for GP use)
  double objective = 0.0;            // sampled objective at theta
  double validation_metric = 0.0;    // negative log-likelihood proxy per point
  long model_evaluations_cumulative = 0;
  double wall_time_s = 0.0;          // cumulative
  bool accepted = true;
  // line-search certificates of the accepted step
  double step_length = 0.0;
  double f_before = 0.0;
  double dir_derivative_before = 0.0;  // g' p at the step start
  double dir_derivative_after = 0.0;   // g_new' p
};

struct OptTrace {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evaluations;
};

inline long count_model_evaluations(const OptTrace& trace) {
  return static_cast<long>(trace.evaluations.size());
}

/// Objective contract: returns f(x) and fills the gradient.
using Objective = std::function<double(const Vector&, Vector&)>;

namespace detail {

struct Evaluation {
  double f = 0.0;
  Vector g;
};

class CountingObjective {
 public:
  CountingObjective(const Objective& obj, OptTrace& trace) : obj_(obj), trace_(trace) {}

  Evaluation operator()(const Vector& x, int step) {
    Evaluation e;
    e.g.resize(x.size());
    e.f = obj_(x, e.g);
    trace_.evaluations.push_back({step, e.f, e.g.norm()});
    return e;
  }

 private:
  const Objective& obj_;
  OptTrace& trace_;
};

struct LineSearchOutcome {
  bool success = false;
  double alpha = 0.0;
  Evaluation at;
};

// Strong Wolfe line search: bracketing with doubling steps, then bounded
// bisection (zoom). Evaluation count is capped by max_line_search.
inline LineSearchOutcome wolfe_line_search(CountingObjective& eval, const Vector& x,
                                           const Vector& p, const Evaluation& start, double c1,
                                           double c2, int max_evals, int step) {
  const double phi0 = start.f;
  const double dphi0 = start.g.dot(p);
  LineSearchOutcome out;
  if (!(dphi0 < 0.0)) return out;  // not a descent direction

  int evals = 0;
  auto probe = [&](double alpha) {
    ++evals;
    return eval(Vector(x + alpha * p), step);
  };

  const auto wolfe_ok = [&](double alpha, const Evaluation& e) {
    return e.f <= phi0 + c1 * alpha * dphi0 && std::abs(e.g.dot(p)) <= c2 * std::abs(dphi0);
  };

  double lo = 0.0, hi = 0.0;
  double f_lo = phi0;
  Evaluation e_lo = start;
  bool bracketed = false;

  double alpha = 1.0;
  double alpha_prev = 0.0;
  double f_prev = phi0;
  Evaluation e_prev = start;
  while (evals < max_evals) {
    Evaluation e = probe(alpha);
    const double dphi = e.g.dot(p);
    if (e.f > phi0 + c1 * alpha * dphi0 || (alpha_prev > 0.0 && e.f >= f_prev)) {
      lo = alpha_prev;
      f_lo = f_prev;
      e_lo = e_prev;
      hi = alpha;
      bracketed = true;
      break;
    }
    if (wolfe_ok(alpha, e)) {
      out.success = true;
      out.alpha = alpha;
      out.at = std::move(e);
      return out;
    }
    if (dphi >= 0.0) {
      lo = alpha;
      f_lo = e.f;
      e_lo = e;
      hi = alpha_prev;
      bracketed = true;
      break;
    }
    alpha_prev = alpha;
    f_prev = e.f;
    e_prev = std::move(e);
    alpha = std::min(2.0 * alpha, 1e6);
  }
  if (!bracketed) return out;

  // zoom by bisection
  while (evals < max_evals) {
    const double mid = 0.5 * (lo + hi);
    Evaluation e = probe(mid);
    const double dphi = e.g.dot(p);
    if (e.f > phi0 + c1 * mid * dphi0 || e.f >= f_lo) {
      hi = mid;
    } else {
      if (wolfe_ok(mid, e)) {
        out.success = true;
        out.alpha = mid;
        out.at = std::move(e);
        return out;
      }
      if (dphi * (hi - lo) >= 0.0) hi = lo;
      lo = mid;
      f_lo = e.f;
      e_lo = std::move(e);
    }
    if (std::abs(hi - lo) < 1e-16) break;
  }
  return out;
}

}  // namespace detail

struct MinimizerHooks {
  // Called at the start of every step, before the step's first evaluation
  // (probe seed rotation, preconditioner rebuild).
  std::function<void(int step, const Vector& x)> begin_step;
  // Called after an accepted step; returning false stops the optimizer.
  std::function<bool(int step, const Vector& x, double f)> after_step;
};

struct MinimizeResult {
  Vector x;
  double f = std::numeric_limits<double>::quiet_NaN();
  int steps = 0;
  bool converged = false;
  std::string message;
};

/// Limited-memory BFGS with an Armijo-Wolfe line search. The objective is
/// re-evaluated at the current iterate at every step start, so that all
/// comparisons within one step's line search use the same objective sample.
inline MinimizeResult lbfgs_minimize(const Objective& obj, const Vector& x0,
                                     const OptOptions& opts, OptTrace& trace,
                                     const MinimizerHooks& hooks = {}) {
  opts.validate();
  detail::CountingObjective eval(obj, trace);

  MinimizeResult res;
  res.x = x0;
  std::deque<std::pair<Vector, Vector>> history;  // (s, y)
  const auto t0 = std::chrono::steady_clock::now();

  for (int step = 1; step <= opts.max_steps; ++step) {
    if (hooks.begin_step) hooks.begin_step(step, res.x);
    detail::Evaluation cur = eval(res.x, step);
    res.f = cur.f;
    if (cur.g.norm() <= opts.grad_tol) {
      res.converged = true;
      res.message = "gradient norm below tolerance";
      break;
    }

    // two-loop recursion
    Vector q = cur.g;
    std::vector<double> alpha_coef(history.size());
    for (int i = static_cast<int>(history.size()) - 1; i >= 0; --i) {
      const auto& [s, yv] = history[static_cast<std::size_t>(i)];
      const double rho = 1.0 / yv.dot(s);
      alpha_coef[static_cast<std::size_t>(i)] = rho * s.dot(q);
      q -= alpha_coef[static_cast<std::size_t>(i)] * yv;
    }
    if (!history.empty()) {
      const auto& [s, yv] = history.back();
      q *= s.dot(yv) / yv.dot(yv);
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
      const auto& [s, yv] = history[i];
      const double rho = 1.0 / yv.dot(s);
      const double beta = rho * yv.dot(q);
      q += (alpha_coef[i] - beta) * s;
    }
    Vector p = -q;
    if (p.dot(cur.g) >= 0.0) {  // noisy curvature spoiled the direction
      history.clear();
      p = -cur.g;
    }

    auto ls = detail::wolfe_line_search(eval, res.x, p, cur, opts.armijo_c1, opts.wolfe_c2,
                                        opts.max_line_search, step);
    StepRecord rec;
    rec.f_before = cur.f;
    rec.dir_derivative_before = cur.g.dot(p);
    rec.model_evaluations_cumulative = count_model_evaluations(trace);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!ls.success) {
      rec.theta = res.x;
      rec.objective = cur.f;
      rec.accepted = false;
      trace.steps.push_back(std::move(rec));
      res.message = "line search failed after bounded bisection; step rejected";
      break;
    }

    const Vector s = ls.alpha * p;
    const Vector yv = ls.at.g - cur.g;
    if (s.dot(yv) > 1e-12 * s.norm() * yv.norm()) {
      history.emplace_back(s, yv);
      if (static_cast<int>(history.size()) > opts.lbfgs_memory) history.pop_front();
    }

    res.x += s;
    res.f = ls.at.f;
    res.steps = step;
    rec.theta = res.x;
    rec.objective = ls.at.f;
    rec.step_length = ls.alpha;
    rec.dir_derivative_after = ls.at.g.dot(p);
    rec.model_evaluations_cumulative = count_model_evaluations(trace);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.steps.push_back(rec);

    if (hooks.after_step && !hooks.after_step(step, res.x, res.f)) {
      res.message = "stopped by callback";
      break;
    }
  }
  return res;
}

/// Adam with the standard moment estimates (beta1 = 0.9, beta2 = 0.999,
/// eps = 1e-8) and the same per-step evaluation bookkeeping as L-BFGS.
inline MinimizeResult adam_minimize(const Objective& obj, const Vector& x0, const OptOptions& opts,
                                    OptTrace& trace, const MinimizerHooks& hooks = {}) {
  opts.validate();
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  detail::CountingObjective eval(obj, trace);

  MinimizeResult res;
  res.x = x0;
  Vector m = Vector::Zero(x0.size());
  Vector v = Vector::Zero(x0.size());
  const auto t0 = std::chrono::steady_clock::now();

  for (int step = 1; step <= opts.max_steps; ++step) {
    if (hooks.begin_step) hooks.begin_step(step, res.x);
    detail::Evaluation cur = eval(res.x, step);
    res.f = cur.f;
    if (cur.g.norm() <= opts.grad_tol) {
      res.converged = true;
      res.message = "gradient norm below tolerance";
      break;
    }
    m = beta1 * m + (1.0 - beta1) * cur.g;
    v = beta2 * v + (1.0 - beta2) * cur.g.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    const Vector update =
        (opts.adam_lr / bc1) * m.cwiseQuotient(((v / bc2).cwiseSqrt().array() + eps).matrix());
    res.x -= update;
    res.steps = step;

    StepRecord rec;
    rec.theta = res.x;
    rec.objective = cur.f;
    rec.f_before = cur.f;
    rec.step_length = opts.adam_lr;
    rec.model_evaluations_cumulative = count_model_evaluations(trace);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.steps.push_back(std::move(rec));

    if (hooks.after_step && !hooks.after_step(step, res.x, res.f)) {
      res.message = "stopped by callback";
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// GP hyperparameter optimization
// ---------------------------------------------------------------------------

struct OptimizeResult {
  Hyperparameters best;
  OptTrace trace;
  double best_validation = std::numeric_limits<double>::infinity();
  double final_train_neg_mll_per_point = 0.0;
};

namespace detail {

inline Hyperparameters unpack_theta(const Vector& x, int d, bool ard) {
  Hyperparameters p;
  if (ard) {
    p = Hyperparameters::from_log_vector(x);
  } else {
    p.log_outputscale = x[0];
    p.log_lengthscales = Vector::Constant(d, x[1]);
    p.log_noise = x[2];
  }
  return p;
}

inline Vector pack_theta(const Hyperparameters& p, bool ard) {
  if (ard) return p.to_log_vector();
  Vector x(3);
  x[0] = p.log_outputscale;
  x[1] = p.log_lengthscales[0];
  x[2] = p.log_noise;
  return x;
}

// Tied lengthscale: its gradient is the sum over per-dimension components.
inline Vector collapse_gradient(const Vector& full, int d, bool ard) {
  if (ard) return full;
  Vector g(3);
  g[0] = full[0];
  g[1] = full.segment(1, d).sum();
  g[2] = full[d + 1];
  return g;
}

}  // namespace detail

/// Runs the chosen optimizer on the negative log-marginal likelihood in
/// log-space. The preconditioner is rebuilt at every step's accepted iterate
/// and reused across that step's line search; one fresh probe seed is drawn
/// per step and shared by all evaluations inside the step. Early stopping
/// monitors the likelihood proxy on the validation block and returns the
/// best-validation hyperparameters.
template <typename PrecondBuilder>
OptimizeResult optimize(const Dataset& train, const Dataset& validation, const KernelSpec& spec,
                        const Hyperparameters& init, PrecondBuilder&& precond_builder,
                        int probe_count, const OptOptions& opts, const MllConfig& mll_cfg,
                        std::uint64_t seed, Index dense_limit = 4096) {
  opts.validate();
  init.validate();
  require(train.size() >= 1, "optimize: empty training set");
  require(init.dim() == train.dim(), "optimize: hyperparameter dimension mismatch");
  const int d = train.dim();
  const bool ard = spec.ard;
  const Index n = train.size();

  using Precond = std::decay_t<decltype(precond_builder(std::declval<const KernelOperator&>()))>;
  struct StepState {
    std::optional<KernelOperator> op;
    std::optional<Precond> precond;
    std::optional<ProbeBatch> probes;
  };
  StepState state;

  auto make_operator = [&](const Hyperparameters& p) {
    return KernelOperator(spec, train.x, p,
                          n <= dense_limit ? StorageMode::Dense : StorageMode::MatrixFree);
  };

  Objective objective = [&](const Vector& x, Vector& grad) {
    // An unevaluable iterate (overflowing hyperparameters, solver breakdown)
    // reads as +inf so the line search backtracks instead of aborting.
    try {
      const Hyperparameters p = detail::unpack_theta(x, d, ard);
      p.validate();
      KernelOperator op = make_operator(p);
      const MllEvaluation eval = evaluate_mll(train.y, op, *state.precond, *state.probes, mll_cfg);
      grad = -detail::collapse_gradient(eval.gradient, d, ard);
      return -eval.value;
    } catch (const input_error&) {
    } catch (const numerical_error&) {
    }
    grad.setZero();
    return std::numeric_limits<double>::infinity();
  };

  MinimizerHooks hooks;
  hooks.begin_step = [&](int step, const Vector& x) {
    const Hyperparameters p = detail::unpack_theta(x, d, ard);
    state.op.emplace(make_operator(p));
    state.precond.emplace(precond_builder(*state.op));
    state.probes = make_probes(n, probe_count, mix_seed(seed, static_cast<std::uint64_t>(step)));
  };

  OptimizeResult result;
  result.best = init;
  int since_best = 0;
  const bool do_early_stop = validation.size() > 0;

  auto validation_nll = [&](const Hyperparameters& p) {
    if (validation.size() == 0) return 0.0;
    if (validation.size() <= dense_limit)
      return -mll_exact(validation.y, validation.x, spec, p).value /
             static_cast<double>(validation.size());
    KernelOperator vop(spec, validation.x, p, StorageMode::MatrixFree);
    const ProbeBatch vprobes =
        make_probes(validation.size(), probe_count, mix_seed(seed, 0x7a11ULL));
    IdentityPreconditioner ident{validation.size()};
    return -evaluate_mll(validation.y, vop, ident, vprobes, mll_cfg, false).value /
           static_cast<double>(validation.size());
  };

  hooks.after_step = [&](int, const Vector& x, double) {
    const Hyperparameters p = detail::unpack_theta(x, d, ard);
    const double vm = validation_nll(p);
    result.trace.steps.back().validation_metric = vm;
    if (!do_early_stop) {
      result.best = p;
      return true;
    }
    if (vm < result.best_validation) {
      result.best_validation = vm;
      result.best = p;
      since_best = 0;
    } else if (++since_best >= opts.early_stop_patience) {
      return false;
    }
    return true;
  };

  const Vector x0 = detail::pack_theta(init, ard);
  MinimizeResult mres;
  if (opts.method == OptMethod::LBFGS)
    mres = lbfgs_minimize(objective, x0, opts, result.trace, hooks);
  else
    mres = adam_minimize(objective, x0, opts, result.trace, hooks);

  if (!do_early_stop && result.trace.steps.empty()) result.best = init;
  if (n <= dense_limit)
    result.final_train_neg_mll_per_point =
        -mll_exact(train.y, train.x, spec, result.best).value / static_cast<double>(n);
  else
    result.final_train_neg_mll_per_point = mres.f / static_cast<double>(n);
  return result;
}

}  // namespace gpkrylov

#endif
