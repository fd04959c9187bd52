#ifndef GPKRYLOV_EXPERIMENTS_HPP
#define GPKRYLOV_EXPERIMENTS_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gpkrylov/common.hpp"
#include "gpkrylov/csv.hpp"
#include "gpkrylov/dataset.hpp"
#include "gpkrylov/detail/sha1.hpp"
#include "gpkrylov/experiment_config.hpp"
#include "gpkrylov/gp_likelihood.hpp"
#include "gpkrylov/optimizer.hpp"
#include "gpkrylov/oracle.hpp"
#include "gpkrylov/preconditioners.hpp"
#include "gpkrylov/trace_estimation.hpp"

namespace gpkrylov {

/// Builds a diag-plus-low-rank preconditioner of the requested kind with
/// hyperparameter derivative operators attached. Kinds without an analytic
/// factor derivative (SVD and Nystroem families) freeze the factor entirely,
/// so only the noise derivative (the identity) remains; the estimator
/// identities hold for any frozen surrogate.
inline DiagPlusLowRank build_preconditioner(const KernelOperator& op, LowRankKind kind, int rank,
                                            const PrecondExperimentConfig& cfg,
                                            std::uint64_t seed) {
  const double noise = op.params().noise_variance();
  const int samples = cfg.samples > 0 ? cfg.samples : std::min<int>(2 * rank, static_cast<int>(op.rows()));
  DiagPlusLowRank p = [&]() -> DiagPlusLowRank {
    switch (kind) {
      case LowRankKind::PivotedCholesky:
        return pivoted_cholesky(make_kernel_accessor(op), rank, cfg.diag_tol, noise);
      case LowRankKind::TruncatedSVD: {
        Matrix k = op.dense_hat();
        k.diagonal().array() -= noise;
        return truncated_svd_precond(k, rank, noise);
      }
      case LowRankKind::RandomizedSVD: {
        Matrix k = op.dense_hat();
        k.diagonal().array() -= noise;
        return randomized_svd_precond(k, rank, samples, seed, noise);
      }
      case LowRankKind::Nystroem:
        return nystroem_precond(make_kernel_accessor(op), rank, samples, cfg.sampling, seed, noise);
      case LowRankKind::RFF:
        return rff_precond(op.data(), op.spec(), op.params(), rank, seed);
      case LowRankKind::QFF:
        return qff_precond(op.data(), op.spec(), op.params(), rank);
    }
    throw input_error("build_preconditioner: unknown kind");
  }();

  if (!p.has_derivatives()) {
    if (kind == LowRankKind::PivotedCholesky) {
      p.attach_derivatives(pivoted_cholesky_deriv_factors(op, p), noise_index(op.dim()));
    } else {
      std::vector<Matrix> frozen(static_cast<std::size_t>(op.num_params()));
      p.attach_derivatives(std::move(frozen), noise_index(op.dim()));
    }
  }
  return p;
}

namespace detail {

inline std::vector<double> sorted_copy(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  v = sorted_copy(std::move(v));
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double rel_err(double est, double exact) {
  return std::abs(est - exact) / std::max(std::abs(exact), 1e-300);
}

// Min-max rescale of every input dimension onto [0, 1]; QFF expects this.
inline Matrix rescale_unit(const Matrix& x) {
  Matrix out = x;
  for (Index j = 0; j < x.cols(); ++j) {
    const double lo = x.col(j).minCoeff();
    const double hi = x.col(j).maxCoeff();
    out.col(j) = (x.col(j).array() - lo) / std::max(hi - lo, 1e-300);
  }
  return out;
}

}  // namespace detail

/// Deterministic shuffled split of an in-memory dataset (no standardization).
inline DataSplits split_dataset(const Dataset& data, const SplitFractions& split,
                                std::uint64_t seed) {
  const Index n = data.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  for (Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Index> pick(0, i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  const auto n_total = static_cast<std::size_t>(n);
  const auto n_train =
      std::min(n_total, static_cast<std::size_t>(std::llround(split.train * static_cast<double>(n))));
  const auto n_val = std::min(n_total - n_train, static_cast<std::size_t>(std::llround(
                                                     split.validation * static_cast<double>(n))));
  const auto n_test = std::min(n_total - n_train - n_val,
                               static_cast<std::size_t>(std::llround(split.test * static_cast<double>(n))));
  DataSplits out;
  out.train = detail::take_rows(data.x, data.y, order, 0, n_train);
  out.validation = detail::take_rows(data.x, data.y, order, n_train, n_val);
  out.test = detail::take_rows(data.x, data.y, order, n_train + n_val, n_test);
  return out;
}

/// Full dataset for the estimator experiments (synthetic draw, or the
/// training split of a CSV).
inline Dataset make_experiment_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset.synthetic) {
    return gen_synthetic(cfg.dataset.n, cfg.dataset.d, cfg.dataset.seed, cfg.kernel, cfg.params)
        .data;
  }
  DataSplits splits = load_csv(cfg.dataset.csv_path, cfg.dataset.target_column,
                               cfg.dataset.standardize, cfg.dataset.split, cfg.dataset.seed);
  return splits.train;
}

inline void write_run_summary(const ExperimentConfig& cfg,
                              const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  std::filesystem::create_directories(cfg.output_dir);
  const std::string text = cfg.serialize();
  std::ofstream out(cfg.output_dir + "/run_summary.txt");
  out << "# gpkrylov run summary\n";
  out << "config_hash = " << detail::git_blob_hash(text) << "\n";
  if (!cfg.dataset.synthetic) {
    std::ifstream in(cfg.dataset.csv_path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    out << "dataset_hash = " << detail::git_blob_hash(buf.str()) << "\n";
  }
  for (const auto& [k, v] : extra) out << k << " = " << v << "\n";
  out << "\n# config echo\n" << text;
}

// ---------------------------------------------------------------------------
// Bias / variance of the estimators
// ---------------------------------------------------------------------------

struct BiasVarianceCell {
  int ell = 0;
  int rank = 0;  // 0 means no preconditioner
  // per quantity: index 0 is the likelihood value, then one entry per
  // hyperparameter gradient component (log-space)
  std::vector<std::string> quantity;
  std::vector<double> exact;
  std::vector<double> rel_bias;
  std::vector<double> median_rel_error;
  std::vector<double> sample_variance;
};

struct BiasVarianceResult {
  ExactMll exact;
  std::vector<BiasVarianceCell> cells;
};

/// For each probe count and a matched-rank preconditioner (plus the rank-0
/// baseline), estimates the likelihood and its gradient `repetitions` times
/// and reports relative bias, median relative error and sample variance
/// against the dense oracle.
inline BiasVarianceResult run_bias_variance(const ExperimentConfig& cfg) {
  require(cfg.type == ExperimentType::BiasVariance, "run_bias_variance: wrong experiment type");
  Dataset data = make_experiment_dataset(cfg);
  require(data.size() <= cfg.dense_limit, "run_bias_variance: n exceeds the dense oracle limit");
  Hyperparameters params = cfg.params;
  if (params.dim() != data.dim())
    params.log_lengthscales = Vector::Constant(data.dim(), cfg.params.log_lengthscales[0]);

  KernelOperator op(cfg.kernel, data.x, params, StorageMode::Dense);
  const ExactMll exact = mll_exact(data.y, data.x, cfg.kernel, params);
  const int np = op.num_params();

  std::filesystem::create_directories(cfg.output_dir);
  std::vector<std::string> quantity_names{"value", "grad_outputscale"};
  for (int j = 0; j < op.dim(); ++j) quantity_names.push_back("grad_lengthscale" + std::to_string(j));
  quantity_names.push_back("grad_noise");

  std::vector<std::string> raw_cols{"ell", "rank", "config", "rep", "probe_seed"};
  for (const auto& q : quantity_names) {
    raw_cols.push_back("est_" + q);
    raw_cols.push_back("exact_" + q);
  }
  CsvWriter raw(cfg.output_dir + "/bias_variance_raw.csv", "bias_variance_raw v1", raw_cols);
  CsvWriter summary(cfg.output_dir + "/bias_variance_summary.csv", "bias_variance_summary v1",
                    {"ell", "rank", "config", "quantity", "exact", "rel_bias", "median_rel_error",
                     "sample_variance"});

  std::vector<double> exact_q{exact.value};
  for (int w = 0; w < np; ++w) exact_q.push_back(exact.gradient[w]);

  BiasVarianceResult result;
  result.exact = exact;

  const MllConfig mll_cfg{cfg.solver, true};
  for (int ell : cfg.probes.counts) {
    for (int config = 0; config < 2; ++config) {
      const int rank = config == 0 ? 0 : ell;  // matched preconditioner rank
      // estimates[q][rep]
      std::vector<std::vector<double>> estimates(quantity_names.size());

      auto run_rep = [&](const auto& precond, int rep) {
        const std::uint64_t s =
            mix_seed(mix_seed(mix_seed(cfg.probes.seed, static_cast<std::uint64_t>(ell)),
                              static_cast<std::uint64_t>(config)),
                     static_cast<std::uint64_t>(rep));
        const ProbeBatch batch = make_probes(data.size(), ell, s);
        const MllEvaluation eval = evaluate_mll(data.y, op, precond, batch, mll_cfg);
        std::vector<std::string> row{std::to_string(ell), std::to_string(rank),
                                     config == 0 ? "baseline" : "preconditioned",
                                     std::to_string(rep), std::to_string(s)};
        estimates[0].push_back(eval.value);
        row.push_back(CsvWriter::format(eval.value));
        row.push_back(CsvWriter::format(exact.value));
        for (int w = 0; w < np; ++w) {
          estimates[static_cast<std::size_t>(w + 1)].push_back(eval.gradient[w]);
          row.push_back(CsvWriter::format(eval.gradient[w]));
          row.push_back(CsvWriter::format(exact.gradient[w]));
        }
        raw.write_row(row);
      };

      if (config == 0) {
        IdentityPreconditioner ident{data.size()};
        for (int rep = 0; rep < cfg.probes.repetitions; ++rep) run_rep(ident, rep);
      } else {
        const DiagPlusLowRank p = build_preconditioner(
            op, cfg.precond.kinds.front(), rank, cfg.precond,
            mix_seed(cfg.probes.seed, static_cast<std::uint64_t>(1000 + ell)));
        for (int rep = 0; rep < cfg.probes.repetitions; ++rep) run_rep(p, rep);
      }

      BiasVarianceCell cell;
      cell.ell = ell;
      cell.rank = rank;
      for (std::size_t q = 0; q < quantity_names.size(); ++q) {
        std::vector<double> errs;
        errs.reserve(estimates[q].size());
        for (double est : estimates[q]) errs.push_back(detail::rel_err(est, exact_q[q]));
        cell.quantity.push_back(quantity_names[q]);
        cell.exact.push_back(exact_q[q]);
        cell.rel_bias.push_back(detail::rel_err(detail::mean(estimates[q]), exact_q[q]));
        cell.median_rel_error.push_back(detail::median(errs));
        cell.sample_variance.push_back(detail::unbiased_variance(estimates[q]));
        summary.write_row({std::to_string(ell), std::to_string(rank),
                           config == 0 ? "baseline" : "preconditioned", quantity_names[q],
                           CsvWriter::format(cell.exact.back()),
                           CsvWriter::format(cell.rel_bias.back()),
                           CsvWriter::format(cell.median_rel_error.back()),
                           CsvWriter::format(cell.sample_variance.back())});
      }
      result.cells.push_back(std::move(cell));
    }
  }
  write_run_summary(cfg);
  return result;
}

// ---------------------------------------------------------------------------
// Preconditioner quality curves and matrix-function residual decay
// ---------------------------------------------------------------------------

struct QualityRow {
  LowRankKind kind;
  int rank = 0;
  int rep = 0;
  double rel_frobenius = 0.0;  // ||K_hat - P_hat||_F / ||K_hat||_F
  double rel_log = 0.0;        // same for f = log
  double rel_inv = 0.0;        // same for f = inverse
};

struct QualityResult {
  std::vector<QualityRow> rows;
};

/// Relative Frobenius error per (kind, rank, seed), for the matrix itself and
/// for f(K_hat) with f in {log, inverse}, against dense oracles.
inline QualityResult run_quality_curves(const ExperimentConfig& cfg) {
  require(cfg.type == ExperimentType::QualityCurves || cfg.type == ExperimentType::ResidualDecay,
          "run_quality_curves: wrong experiment type");
  Dataset data = make_experiment_dataset(cfg);
  require(data.size() <= cfg.dense_limit, "run_quality_curves: n exceeds the dense limit");
  const bool has_qff = std::find(cfg.precond.kinds.begin(), cfg.precond.kinds.end(),
                                 LowRankKind::QFF) != cfg.precond.kinds.end();
  if (has_qff) data.x = detail::rescale_unit(data.x);

  Hyperparameters params = cfg.params;
  if (params.dim() != data.dim())
    params.log_lengthscales = Vector::Constant(data.dim(), cfg.params.log_lengthscales[0]);
  KernelOperator op(cfg.kernel, data.x, params, StorageMode::Dense);
  const Matrix khat = op.dense_hat();
  const oracle::DenseSpd khat_spd(khat);
  const Matrix log_k = oracle::dense_matrix_log(khat_spd);
  const Matrix inv_k = khat_spd.llt().solve(Matrix::Identity(khat.rows(), khat.cols()));
  const double norm_id = khat.norm(), norm_log = log_k.norm(), norm_inv = inv_k.norm();

  std::filesystem::create_directories(cfg.output_dir);
  const std::string file = cfg.type == ExperimentType::ResidualDecay ? "residual_decay.csv"
                                                                     : "quality_curves.csv";
  CsvWriter csv(cfg.output_dir + "/" + file,
                experiment_type_name(cfg.type) + std::string(" v1"),
                {"kernel", "kind", "rank", "rep", "seed", "rel_frobenius", "rel_log", "rel_inv"});

  QualityResult result;
  for (LowRankKind kind : cfg.precond.kinds) {
    for (int rep = 0; rep < cfg.probes.repetitions; ++rep) {
      for (int rank : cfg.precond.ranks) {
        const std::uint64_t seed =
            mix_seed(mix_seed(cfg.probes.seed, static_cast<std::uint64_t>(kind)),
                     static_cast<std::uint64_t>(rep));
        const DiagPlusLowRank p = build_preconditioner(op, kind, rank, cfg.precond, seed);
        const Matrix pd = p.dense();
        QualityRow row;
        row.kind = kind;
        row.rank = rank;
        row.rep = rep;
        row.rel_frobenius = (khat - pd).norm() / norm_id;
        const oracle::DenseSpd pd_spd(pd);
        row.rel_log = (log_k - oracle::dense_matrix_log(pd_spd)).norm() / norm_log;
        row.rel_inv =
            (inv_k - pd_spd.llt().solve(Matrix::Identity(pd.rows(), pd.cols()))).norm() / norm_inv;
        csv.write_row({family_name(cfg.kernel.family), kind_name(kind), std::to_string(rank),
                       std::to_string(rep), std::to_string(seed),
                       CsvWriter::format(row.rel_frobenius), CsvWriter::format(row.rel_log),
                       CsvWriter::format(row.rel_inv)});
        result.rows.push_back(row);
      }
    }
  }
  write_run_summary(cfg);
  return result;
}

// ---------------------------------------------------------------------------
// End-to-end training
// ---------------------------------------------------------------------------

struct TrainingRow {
  int run = 0;
  bool preconditioned = false;
  int rank = 0;
  std::uint64_t seed = 0;
  int steps = 0;
  long model_evaluations = 0;
  double wall_time_s = 0.0;
  double train_neg_mll_per_point = 0.0;
  double test_neg_mll_per_point = 0.0;
  double test_rmse = 0.0;
  double speedup = 1.0;
  Hyperparameters final_params;
};

struct TrainingResult {
  std::vector<TrainingRow> rows;  // 2 per run: baseline then preconditioned
};

namespace detail {

inline double dataset_neg_mll_per_point(const Dataset& d, const KernelSpec& spec,
                                        const Hyperparameters& p) {
  if (d.size() == 0) return 0.0;
  return -mll_exact(d.y, d.x, spec, p).value / static_cast<double>(d.size());
}

template <typename Builder>
TrainingRow run_training_arm(const Dataset& train, const Dataset& validation, const Dataset& test,
                             const ExperimentConfig& cfg, Builder&& builder, int probe_count,
                             std::uint64_t seed) {
  const OptimizeResult res =
      optimize(train, validation, cfg.kernel, cfg.params, builder, probe_count, cfg.optimizer,
               MllConfig{cfg.solver, true}, seed, cfg.dense_limit);
  TrainingRow row;
  row.seed = seed;
  row.steps = static_cast<int>(res.trace.steps.size());
  row.model_evaluations = count_model_evaluations(res.trace);
  row.wall_time_s = res.trace.steps.empty() ? 0.0 : res.trace.steps.back().wall_time_s;
  row.train_neg_mll_per_point = res.final_train_neg_mll_per_point;
  row.test_neg_mll_per_point = dataset_neg_mll_per_point(test, cfg.kernel, res.best);
  row.final_params = res.best;

  if (test.size() > 0) {
    // predictive mean via the training solve
    KernelOperator op(cfg.kernel, train.x, res.best,
                      train.size() <= cfg.dense_limit ? StorageMode::Dense
                                                      : StorageMode::MatrixFree);
    const auto precond = builder(op);
    CgConfig solver = cfg.solver;
    const CgResult alpha = pcg_solve(op, train.y, precond, solver);
    const Vector mean =
        cross_kernel(cfg.kernel, res.best, test.x, train.x) * alpha.solution;
    row.test_rmse = std::sqrt((mean - test.y).squaredNorm() / static_cast<double>(test.size()));
  }
  return row;
}

}  // namespace detail

/// Paired training runs (rank 0 baseline vs preconditioned, shared seeds)
/// reporting likelihoods, test RMSE, model evaluation counts and speedup.
/// Training uses the documented default initialization (o = 1, l_j = 1,
/// sigma^2 = 1e-2 in log-space); the [kernel] hyperparameters act as the
/// synthetic ground truth.
inline TrainingResult run_training(const ExperimentConfig& cfg) {
  require(cfg.type == ExperimentType::Training, "run_training: wrong experiment type");

  DataSplits splits;
  if (cfg.dataset.synthetic) {
    const SyntheticDataset synth =
        gen_synthetic(cfg.dataset.n, cfg.dataset.d, cfg.dataset.seed, cfg.kernel, cfg.params);
    splits = split_dataset(synth.data, cfg.dataset.split, mix_seed(cfg.dataset.seed, 0x511ULL));
  } else {
    splits = load_csv(cfg.dataset.csv_path, cfg.dataset.target_column, cfg.dataset.standardize,
                      cfg.dataset.split, cfg.dataset.seed);
  }
  require(splits.train.size() >= 2, "run_training: training split too small");

  std::filesystem::create_directories(cfg.output_dir);
  if (splits.standardized) {
    CsvWriter stats(cfg.output_dir + "/standardization.csv", "standardization v1",
                    {"column", "mean", "std"});
    for (std::size_t j = 0; j < splits.feature_names.size(); ++j)
      stats.write_row({splits.feature_names[j],
                       CsvWriter::format(splits.stats.feature_mean[static_cast<Index>(j)]),
                       CsvWriter::format(splits.stats.feature_std[static_cast<Index>(j)])});
    stats.write_row({splits.target_name, CsvWriter::format(splits.stats.target_mean),
                     CsvWriter::format(splits.stats.target_std)});
  }

  ExperimentConfig run_cfg = cfg;  // optimizer initialization (documented default)
  run_cfg.params.log_outputscale = 0.0;
  run_cfg.params.log_lengthscales = Vector::Zero(splits.train.dim());
  run_cfg.params.log_noise = std::log(1e-2);

  const int rank = cfg.precond.ranks.front();
  const int probe_count = cfg.probes.counts.front();
  const LowRankKind kind = cfg.precond.kinds.front();

  CsvWriter csv(cfg.output_dir + "/training.csv", "training v1",
                {"run", "config", "rank", "seed", "steps", "model_evaluations", "wall_time_s",
                 "train_neg_mll_per_point", "test_neg_mll_per_point", "test_rmse", "speedup"});

  TrainingResult result;
  for (int run = 0; run < cfg.training_runs; ++run) {
    const std::uint64_t seed = mix_seed(cfg.probes.seed, static_cast<std::uint64_t>(run));

    TrainingRow base = detail::run_training_arm(
        splits.train, splits.validation, splits.test, run_cfg,
        [&](const KernelOperator& op) { return IdentityPreconditioner{op.rows()}; }, probe_count,
        seed);
    base.run = run;
    base.preconditioned = false;
    base.rank = 0;

    TrainingRow prec = detail::run_training_arm(
        splits.train, splits.validation, splits.test, run_cfg,
        [&](const KernelOperator& op) {
          return build_preconditioner(op, kind, rank, cfg.precond, mix_seed(seed, 0xbfULL));
        },
        probe_count, seed);
    prec.run = run;
    prec.preconditioned = true;
    prec.rank = rank;
    prec.speedup = prec.wall_time_s > 0.0 ? base.wall_time_s / prec.wall_time_s : 1.0;

    for (const TrainingRow* row : {&base, &prec}) {
      csv.write_row({std::to_string(row->run), row->preconditioned ? "preconditioned" : "baseline",
                     std::to_string(row->rank), std::to_string(row->seed),
                     std::to_string(row->steps), std::to_string(row->model_evaluations),
                     CsvWriter::format(row->wall_time_s),
                     CsvWriter::format(row->train_neg_mll_per_point),
                     CsvWriter::format(row->test_neg_mll_per_point),
                     CsvWriter::format(row->test_rmse), CsvWriter::format(row->speedup)});
    }
    result.rows.push_back(std::move(base));
    result.rows.push_back(std::move(prec));
  }
  write_run_summary(cfg);
  return result;
}

}  // namespace gpkrylov

#endif
