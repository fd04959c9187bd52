#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "gpkrylov/kernels.hpp"
#include "gpkrylov/oracle.hpp"
#include "gpkrylov/preconditioners.hpp"
#include "support.hpp"

using namespace gpkrylov;
using gpkrylov::testing::default_params;
using gpkrylov::testing::random_matrix;
using gpkrylov::testing::random_spd;
using gpkrylov::testing::random_vector;

namespace {

Matrix uniform_grid(Index n) {
  Matrix x(n, 1);
  for (Index i = 0; i < n; ++i) x(i, 0) = static_cast<double>(i) / static_cast<double>(n - 1);
  return x;
}

double noise_free_rel_fro(const Matrix& k, const DiagPlusLowRank& p) {
  const Matrix ll = p.factor() * p.factor().transpose();
  return (k - ll).norm() / k.norm();
}

// Pivoted Cholesky factor with a forced pivot order; reference for the
// frozen-pivot derivative semantics.
Matrix factor_with_pivots(const KernelOperator& op, const std::vector<Index>& pivots) {
  const Index n = op.rows();
  Vector d = op.kernel_diagonal();
  Matrix l(n, static_cast<Index>(pivots.size()));
  for (std::size_t s = 0; s < pivots.size(); ++s) {
    const Index p = pivots[s];
    Vector c = op.kernel_column(p);
    if (s > 0)
      c -= l.leftCols(static_cast<Index>(s)) *
           l.row(p).head(static_cast<Index>(s)).transpose();
    l.col(static_cast<Index>(s)) = c / std::sqrt(d[p]);
    d -= l.col(static_cast<Index>(s)).cwiseAbs2();
  }
  return l;
}

}  // namespace

TEST_CASE("pivoted cholesky greedy rule, hand-executed") {
  Matrix k = Vector{{3.0, 2.0, 1.0}}.asDiagonal();
  Vector remaining;
  const DiagPlusLowRank p = pivoted_cholesky(make_dense_accessor(k), 1, 0.0, 0.1, &remaining);
  REQUIRE(p.rank() == 1);
  CHECK(p.pivots() == std::vector<Index>{0});
  CHECK(p.factor()(0, 0) == Catch::Approx(std::sqrt(3.0)));
  CHECK(p.factor()(1, 0) == 0.0);
  CHECK(remaining[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(remaining[1] == Catch::Approx(2.0));
  CHECK(remaining[2] == Catch::Approx(1.0));
}

TEST_CASE("pivoted cholesky ties break to the lowest index") {
  Matrix k = Matrix::Identity(3, 3);
  const DiagPlusLowRank p = pivoted_cholesky(make_dense_accessor(k), 2, 0.0, 0.1);
  CHECK(p.pivots() == std::vector<Index>{0, 1});
}

TEST_CASE("full-rank pivoted cholesky reconstructs the matrix") {
  auto gen = testing::rng(31);
  const Matrix k = random_spd(24, gen);
  const DiagPlusLowRank p = pivoted_cholesky(make_dense_accessor(k), 24, 0.0, 0.1);
  const Matrix ll = p.factor() * p.factor().transpose();
  CHECK((k - ll).norm() / k.norm() < 1e-10);
}

TEST_CASE("pivoted cholesky stops at diag_tol and reports achieved rank") {
  Matrix k = Vector{{1.0, 0.4, 0.3}}.asDiagonal();
  const DiagPlusLowRank p = pivoted_cholesky(make_dense_accessor(k), 3, 0.5, 0.1);
  CHECK(p.rank() == 1);
}

TEST_CASE("pivoted cholesky rejects non-PSD input") {
  Matrix k = Vector{{1.0, -0.5}}.asDiagonal();
  CHECK_THROWS_AS(pivoted_cholesky(make_dense_accessor(k), 2, 0.0, 0.1), numerical_error);
}

TEST_CASE("pivoted cholesky residual trace equals the remaining diagonal") {
  auto gen = testing::rng(32);
  const Hyperparameters p = default_params(2, 1.3, 0.6);
  KernelOperator op(KernelSpec{KernelFamily::Matern32}, random_matrix(80, 2, gen), p);
  Vector remaining;
  const DiagPlusLowRank prec = pivoted_cholesky(make_kernel_accessor(op), 20, 0.0, 0.1, &remaining);
  Matrix k = op.dense_hat();
  k.diagonal().array() -= p.noise_variance();
  const Matrix residual = k - prec.factor() * prec.factor().transpose();
  CHECK(residual.trace() == Catch::Approx(remaining.sum()).margin(1e-10 * k.trace()));
  // residual stays PSD
  Eigen::SelfAdjointEigenSolver<Matrix> es(residual);
  CHECK(es.eigenvalues().minCoeff() > -1e-10 * k.norm());
}

TEST_CASE("pivoted cholesky error halves with doubled rank on 1-d RBF") {
  const Index n = 1000;
  const Matrix x = uniform_grid(n);
  const Hyperparameters p = default_params(1, 1.0, 0.05, 1e-2);
  KernelOperator op(KernelSpec{}, x, p, StorageMode::Dense);
  Matrix k = op.dense_hat();
  k.diagonal().array() -= p.noise_variance();

  double prev = -1.0;
  for (int rank : {8, 16, 32, 64}) {
    const DiagPlusLowRank prec = pivoted_cholesky(make_kernel_accessor(op), rank, 0.0, 1e-2);
    const double rel = noise_free_rel_fro(k, prec);
    if (prev >= 0.0) CHECK(rel <= 0.5 * prev);
    prev = rel;
  }
}

TEST_CASE("truncated SVD basics") {
  SECTION("full rank is exact") {
    auto gen = testing::rng(33);
    const Matrix k = random_spd(16, gen);
    const DiagPlusLowRank p = truncated_svd_precond(k, 16, 0.1);
    CHECK(noise_free_rel_fro(k, p) < 1e-12);
  }
  SECTION("diagonal case") {
    Matrix k = Vector{{4.0, 1.0}}.asDiagonal();
    const DiagPlusLowRank p = truncated_svd_precond(k, 1, 0.1);
    const Matrix ll = p.factor() * p.factor().transpose();
    CHECK(ll(0, 0) == Catch::Approx(4.0).epsilon(1e-12));
    CHECK((k - ll).norm() == Catch::Approx(1.0).epsilon(1e-12));
  }
  SECTION("rejects clearly indefinite input") {
    Matrix k = Vector{{1.0, -1.0}}.asDiagonal();
    CHECK_THROWS_AS(truncated_svd_precond(k, 1, 0.1), numerical_error);
  }
}

TEST_CASE("truncated SVD is Frobenius-optimal among all builders") {
  auto gen = testing::rng(34);
  const Matrix x = random_matrix(128, 1, gen);
  const Hyperparameters params = default_params(1, 1.0, 0.4, 1e-2);
  KernelOperator op(KernelSpec{}, x, params, StorageMode::Dense);
  Matrix k = op.dense_hat();
  k.diagonal().array() -= params.noise_variance();

  const int rank = 12;
  const double svd_err = (k - truncated_svd_precond(k, rank, 1e-2).dense()).norm();
  const auto check_not_better = [&](const DiagPlusLowRank& p) {
    Matrix cand = p.factor() * p.factor().transpose();
    cand.diagonal().array() += 1e-2;
    CHECK(svd_err <= (k - cand).norm() * (1.0 + 1e-9));
  };
  check_not_better(pivoted_cholesky(make_kernel_accessor(op), rank, 0.0, 1e-2));
  check_not_better(randomized_svd_precond(k, rank, 24, 5, 1e-2));
  check_not_better(nystroem_precond(make_kernel_accessor(op), rank, 24,
                                    NystroemSampling::DiagonalWeighted, 5, 1e-2));
  check_not_better(rff_precond(x, KernelSpec{}, params, rank, 5));
}

TEST_CASE("randomized SVD approximates well on fast-decaying spectra") {
  auto gen = testing::rng(35);
  const Matrix x = random_matrix(128, 1, gen);
  const Hyperparameters params = default_params(1, 1.0, 0.5, 1e-2);
  KernelOperator op(KernelSpec{}, x, params, StorageMode::Dense);
  Matrix k = op.dense_hat();
  k.diagonal().array() -= params.noise_variance();

  const DiagPlusLowRank p = randomized_svd_precond(k, 16, 32, 7, 1e-2);
  CHECK(noise_free_rel_fro(k, p) < 0.05);
  // bitwise deterministic per seed
  const DiagPlusLowRank q = randomized_svd_precond(k, 16, 32, 7, 1e-2);
  CHECK((p.factor() - q.factor()).norm() == 0.0);
  CHECK_THROWS_AS(randomized_svd_precond(k, 16, 8, 7, 1e-2), input_error);  // sketch < rank
}

TEST_CASE("nystroem with all columns is exact") {
  auto gen = testing::rng(36);
  const Matrix k = random_spd(24, gen);
  const DiagPlusLowRank p =
      nystroem_precond(make_dense_accessor(k), 24, 24, NystroemSampling::Uniform, 3, 0.1);
  CHECK(noise_free_rel_fro(k, p) < 1e-8);
}

TEST_CASE("nystroem on the identity reproduces sampled coordinates") {
  Matrix k = Matrix::Identity(12, 12);
  const int s = 5;
  const DiagPlusLowRank p =
      nystroem_precond(make_dense_accessor(k), s, s, NystroemSampling::Uniform, 11, 0.1);
  const Matrix ll = p.factor() * p.factor().transpose();
  // P is a projector onto s distinct coordinates
  CHECK((k - ll).squaredNorm() == Catch::Approx(12.0 - s).margin(1e-10));
  for (Index i = 0; i < 12; ++i) {
    const double di = ll(i, i);
    CHECK((std::abs(di) < 1e-10 || std::abs(di - 1.0) < 1e-10));
  }
}

TEST_CASE("nystroem beats RFF at matched rank on 1-d RBF in most seeds") {
  auto gen = testing::rng(37);
  const Matrix x = random_matrix(512, 1, gen);
  const Hyperparameters params = default_params(1, 1.0, 0.5, 1e-2);
  KernelOperator op(KernelSpec{}, x, params, StorageMode::Dense);
  Matrix k = op.dense_hat();
  k.diagonal().array() -= params.noise_variance();

  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DiagPlusLowRank ny = nystroem_precond(make_kernel_accessor(op), 32, 64,
                                                NystroemSampling::DiagonalWeighted, seed, 1e-2);
    const DiagPlusLowRank rf = rff_precond(x, KernelSpec{}, params, 32, seed);
    if (noise_free_rel_fro(k, ny) < noise_free_rel_fro(k, rf)) ++wins;
  }
  CHECK(wins >= 8);
}

TEST_CASE("RFF feature map: bounded diagonal and MC-consistent mean") {
  auto gen = testing::rng(38);
  const Matrix x = random_matrix(16, 2, gen);
  const Hyperparameters params = default_params(2, 1.3, 0.8, 1e-2);
  const double o2 = std::pow(params.outputscale(), 2);

  // k_hat(x, x) <= 2 o^2 always (bounded features)
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DiagPlusLowRank p = rff_precond(x, KernelSpec{}, params, 64, seed);
    const Vector diag = (p.factor() * p.factor().transpose()).diagonal();
    CHECK(diag.maxCoeff() <= 2.0 * o2 + 1e-12);
  }

  // mean reconstructed diagonal matches o^2 within 3 empirical standard errors
  const int ell = 4096, seeds = 20;
  std::vector<double> entries;
  for (std::uint64_t seed = 100; seed < 100 + seeds; ++seed) {
    const DiagPlusLowRank p = rff_precond(x, KernelSpec{}, params, ell, seed);
    entries.push_back(p.factor().row(0).squaredNorm());
  }
  double mean = 0.0;
  for (double e : entries) mean += e;
  mean /= seeds;
  double var = 0.0;
  for (double e : entries) var += (e - mean) * (e - mean);
  var /= (seeds - 1);
  const double se = std::sqrt(var / seeds);
  CHECK(std::abs(mean - o2) <= 3.0 * se + 1e-12);
}

TEST_CASE("RFF error decays with the feature count on 1-d RBF") {
  auto gen = testing::rng(39);
  const Matrix x = random_matrix(512, 1, gen);
  const Hyperparameters params = default_params(1, 1.0, 0.5, 1e-2);
  KernelOperator op(KernelSpec{}, x, params, StorageMode::Dense);
  Matrix k = op.dense_hat();
  k.diagonal().array() -= params.noise_variance();

  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double e1 = noise_free_rel_fro(k, rff_precond(x, KernelSpec{}, params, 32, seed));
    const double e4 = noise_free_rel_fro(k, rff_precond(x, KernelSpec{}, params, 128, seed));
    ratios.push_back(e4 / e1);
  }
  std::sort(ratios.begin(), ratios.end());
  CHECK(0.5 * (ratios[4] + ratios[5]) <= 0.7);  // median; l^{-1/2} predicts 0.5
}

TEST_CASE("RFF covers Matern spectral densities and rejects RatQuad") {
  auto gen = testing::rng(40);
  const Matrix x = random_matrix(64, 1, gen);
  const Hyperparameters params = default_params(1, 1.0, 0.7, 1e-2);
  KernelOperator op(KernelSpec{KernelFamily::Matern32}, x, params, StorageMode::Dense);
  Matrix k = op.dense_hat();
  k.diagonal().array() -= params.noise_variance();
  const DiagPlusLowRank p = rff_precond(x, KernelSpec{KernelFamily::Matern32}, params, 4096, 2);
  CHECK(noise_free_rel_fro(k, p) < 0.2);  // MC-level agreement
  CHECK_THROWS_AS(rff_precond(x, KernelSpec{KernelFamily::RationalQuadratic}, params, 16, 2),
                  input_error);
}

TEST_CASE("QFF reaches near machine precision and improves with rank") {
  const Matrix x = uniform_grid(256);
  const Hyperparameters params = default_params(1, 1.0, 0.5, 1e-2);
  KernelOperator op(KernelSpec{}, x, params, StorageMode::Dense);
  Matrix k = op.dense_hat();
  k.diagonal().array() -= params.noise_variance();

  const DiagPlusLowRank p64 = qff_precond(x, KernelSpec{}, params, 64);
  const Matrix err64 = k - p64.factor() * p64.factor().transpose();
  CHECK(err64.cwiseAbs().maxCoeff() <= 1e-8);

  const DiagPlusLowRank p2 = qff_precond(x, KernelSpec{}, params, 2);
  const DiagPlusLowRank p8 = qff_precond(x, KernelSpec{}, params, 8);
  const double e2 = noise_free_rel_fro(k, p2), e8 = noise_free_rel_fro(k, p8);
  CHECK(e8 < e2);

  // deterministic construction, bitwise
  const DiagPlusLowRank q64 = qff_precond(x, KernelSpec{}, params, 64);
  CHECK((p64.factor() - q64.factor()).norm() == 0.0);

  auto gen2 = testing::rng(1);
  CHECK_THROWS_AS(qff_precond(random_matrix(8, 2, gen2), KernelSpec{}, default_params(2), 8),
                  input_error);
  CHECK_THROWS_AS(qff_precond(x, KernelSpec{KernelFamily::Matern32}, params, 8), input_error);
  CHECK_THROWS_AS(qff_precond(x, KernelSpec{}, params, 7), input_error);
}

TEST_CASE("Woodbury solve, log-determinant and trace formula") {
  auto gen = testing::rng(41);

  SECTION("rank zero reduces to scaled identity") {
    DiagPlusLowRank p(2.0, Matrix(4, 0), LowRankKind::PivotedCholesky);
    const Vector v = random_vector(4, gen);
    CHECK((p.solve(v) - v / 2.0).norm() == 0.0);
    CHECK(p.logdet() == Catch::Approx(4.0 * std::log(2.0)).epsilon(1e-14));
    CHECK(p.trace_inv_deriv(ScaledIdentityOp{4, 1.0}) == Catch::Approx(4.0 / 2.0).epsilon(1e-14));
  }

  SECTION("solve matches the dense inverse") {
    const Matrix l = random_matrix(8, 2, gen);
    DiagPlusLowRank p(0.3, l, LowRankKind::RFF);
    const Vector v = random_vector(8, gen);
    Matrix dense = l * l.transpose();
    dense.diagonal().array() += 0.3;
    const Vector want = dense.inverse() * v;
    CHECK((p.solve(v) - want).norm() / want.norm() < 1e-10);
    CHECK((p.apply(p.solve(v)) - v).norm() / v.norm() < 1e-10);
    CHECK((p.solve(p.apply(v)) - v).norm() / v.norm() < 1e-10);
  }

  SECTION("logdet matches dense and ignores zero-column padding") {
    Matrix l = random_matrix(8, 3, gen);
    DiagPlusLowRank p(0.7, l, LowRankKind::RFF);
    Matrix dense = l * l.transpose();
    dense.diagonal().array() += 0.7;
    CHECK(p.logdet() ==
          Catch::Approx(oracle::dense_logdet(oracle::DenseSpd(dense))).margin(1e-10));

    Matrix padded(8, 5);
    padded << l, Matrix::Zero(8, 2);
    DiagPlusLowRank q(0.7, padded, LowRankKind::RFF);
    CHECK(q.logdet() == Catch::Approx(p.logdet()).margin(1e-12));
  }

  SECTION("trace of inverse times derivative") {
    const Matrix l = random_matrix(16, 4, gen);
    DiagPlusLowRank p(0.5, l, LowRankKind::RFF);
    Matrix dense = l * l.transpose();
    dense.diagonal().array() += 0.5;
    // dP = I: matches the dense trace of the inverse
    const double want = oracle::dense_trace_inv_deriv(oracle::DenseSpd(dense),
                                                      Matrix::Identity(16, 16));
    CHECK(p.trace_inv_deriv(ScaledIdentityOp{16, 1.0}) == Catch::Approx(want).epsilon(1e-10));
    // dP = P itself: exactly n
    DenseSymmetricOp self{&dense};
    CHECK(p.trace_inv_deriv(self) == Catch::Approx(16.0).epsilon(1e-12));
  }

  SECTION("noise must be positive") {
    CHECK_THROWS_AS(DiagPlusLowRank(0.0, Matrix(4, 0), LowRankKind::RFF), input_error);
  }
}

TEST_CASE("frozen-pivot derivative factors match finite differences") {
  auto gen = testing::rng(42);
  const Matrix x = random_matrix(48, 2, gen);
  const Hyperparameters params = default_params(2, 1.2, 0.7, 0.05);
  KernelSpec spec{KernelFamily::RBF};
  KernelOperator op(spec, x, params, StorageMode::Dense);
  const DiagPlusLowRank p = pivoted_cholesky_with_derivatives(op, 12);

  const double h = 1e-6;
  for (int which : {kOutputscaleIndex, lengthscale_index(0), lengthscale_index(1)}) {
    auto factor_at = [&](double raw) {
      Hyperparameters q = params;
      if (which == kOutputscaleIndex)
        q.log_outputscale = std::log(raw);
      else
        q.log_lengthscales[which - 1] = std::log(raw);
      KernelOperator oq(spec, x, q, StorageMode::Dense);
      return factor_with_pivots(oq, p.pivots());
    };
    const double raw0 = params.raw_value(which);
    const Matrix fd = (factor_at(raw0 + h) - factor_at(raw0 - h)) / (2.0 * h);
    const LowRankDerivOp dop = p.deriv_op(which);
    CHECK((*dop.dl - fd).norm() / std::max(fd.norm(), 1e-12) < 1e-5);

    // trace formula against the dense oracle with the same dP
    Matrix dense_p = p.factor() * p.factor().transpose();
    dense_p.diagonal().array() += params.noise_variance();
    const Matrix dense_dp =
        *dop.dl * p.factor().transpose() + p.factor() * dop.dl->transpose();
    const double want = oracle::dense_trace_inv_deriv(oracle::DenseSpd(dense_p), dense_dp);
    CHECK(p.trace_inv_deriv(which) == Catch::Approx(want).epsilon(1e-8).margin(1e-10));
  }

  // noise derivative: dP = I
  Matrix dense_p = p.factor() * p.factor().transpose();
  dense_p.diagonal().array() += params.noise_variance();
  const double want_noise =
      oracle::dense_trace_inv_deriv(oracle::DenseSpd(dense_p), Matrix::Identity(48, 48));
  CHECK(p.trace_inv_deriv(noise_index(2)) == Catch::Approx(want_noise).epsilon(1e-8));
}

TEST_CASE("condition number bound from preconditioner quality") {
  auto gen = testing::rng(43);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix x = random_matrix(64, 1, gen);
    const Hyperparameters params = default_params(1, 1.0, 0.6, 0.05);
    KernelOperator op(KernelSpec{}, x, params, StorageMode::Dense);
    const Matrix khat = op.dense_hat();
    const DiagPlusLowRank p =
        pivoted_cholesky(make_kernel_accessor(op), 8 + 4 * trial, 0.0, 0.05);
    const Matrix pd = p.dense();

    Eigen::SelfAdjointEigenSolver<Matrix> esp(pd);
    const Matrix pinv_half = esp.eigenvectors() *
                             esp.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                             esp.eigenvectors().transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> esk(pinv_half * khat * pinv_half);
    const double kappa = esk.eigenvalues().maxCoeff() / esk.eigenvalues().minCoeff();

    Eigen::SelfAdjointEigenSolver<Matrix> esh(khat);
    const double c = std::max(1.0 / esp.eigenvalues().minCoeff(),
                              1.0 / esh.eigenvalues().minCoeff());
    const double bound = std::pow(1.0 + c * (khat - pd).norm(), 2);
    CHECK(kappa <= bound * (1.0 + 1e-9));
  }
}

TEST_CASE("quality curves") {
  SECTION("truncated SVD at full rank is exact") {
    auto gen = testing::rng(44);
    const Matrix k = random_spd(32, gen);
    Matrix khat = k;
    khat.diagonal().array() += 0.1;
    const QualityCurve curve = quality_curve(
        khat, [&](int r) { return truncated_svd_precond(k, r, 0.1); }, {32});
    CHECK(curve.rel_frobenius[0] < 1e-12);
  }

  SECTION("pivoted cholesky curve on 1-d RBF decreases strictly") {
    const Matrix x = uniform_grid(512);
    const Hyperparameters params = default_params(1, 1.0, 0.05, 1e-2);
    KernelOperator op(KernelSpec{}, x, params, StorageMode::Dense);
    const QualityCurve curve = quality_curve(
        op.dense_hat(),
        [&](int r) { return pivoted_cholesky(make_kernel_accessor(op), r, 0.0, 1e-2); },
        {4, 8, 16, 32, 64});
    for (std::size_t i = 1; i < curve.rel_frobenius.size(); ++i)
      CHECK(curve.rel_frobenius[i] < curve.rel_frobenius[i - 1]);
  }

  SECTION("identity kernel has the hand-computed residual") {
    const Index n = 40;
    const double o2 = 2.5;
    Matrix k = o2 * Matrix::Identity(n, n);
    const int rank = 12;
    const DiagPlusLowRank p = pivoted_cholesky(make_dense_accessor(k), rank, 0.0, 1e-2);
    const Matrix ll = p.factor() * p.factor().transpose();
    CHECK((k - ll).squaredNorm() ==
          Catch::Approx(static_cast<double>(n - rank) * o2 * o2).epsilon(1e-10));
  }

  SECTION("dense limit is enforced") {
    Matrix k = Matrix::Identity(8, 8);
    CHECK_THROWS_AS(
        quality_curve(k, [&](int r) { return truncated_svd_precond(k, r, 0.1); }, {2}, 4),
        input_error);
  }
}
