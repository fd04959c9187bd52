#include <catch2/catch_amalgamated.hpp>

#include "gpkrylov/kernels.hpp"
#include "support.hpp"

using namespace gpkrylov;
using gpkrylov::testing::default_params;
using gpkrylov::testing::random_matrix;
using gpkrylov::testing::random_vector;

namespace {

Vector vec1(double x) { return Vector::Constant(1, x); }

}  // namespace

TEST_CASE("kernel_value closed forms") {
  const Hyperparameters p = default_params(1);

  KernelSpec rbf{KernelFamily::RBF};
  CHECK(kernel_value(rbf, p, vec1(0.3), vec1(0.3)) == Catch::Approx(1.0));
  CHECK(kernel_value(rbf, p, vec1(0.0), vec1(std::sqrt(2.0 * std::log(2.0)))) ==
        Catch::Approx(0.5).epsilon(1e-12));

  KernelSpec m12{KernelFamily::Matern12};
  CHECK(kernel_value(m12, p, vec1(0.0), vec1(1.0)) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));

  KernelSpec m32{KernelFamily::Matern32};
  CHECK(kernel_value(m32, p, vec1(0.5), vec1(0.5)) == Catch::Approx(1.0));

  KernelSpec rq{KernelFamily::RationalQuadratic};
  // alpha = 1: k(r) = 1 / (1 + r^2/2)
  CHECK(kernel_value(rq, p, vec1(0.0), vec1(1.0)) == Catch::Approx(1.0 / 1.5).epsilon(1e-12));
}

TEST_CASE("kernel_value stationarity bound and scaling") {
  auto gen = testing::rng(3);
  Hyperparameters p = default_params(3, 1.7, 0.8);
  for (KernelFamily fam : {KernelFamily::RBF, KernelFamily::Matern12, KernelFamily::Matern32,
                           KernelFamily::Matern52, KernelFamily::RationalQuadratic}) {
    KernelSpec spec{fam};
    const Vector x = random_vector(3, gen), y = random_vector(3, gen);
    const double o2 = std::pow(p.outputscale(), 2);
    CHECK(kernel_value(spec, p, x, x) == Catch::Approx(o2));
    CHECK(kernel_value(spec, p, x, y) <= o2 + 1e-15);
  }
}

TEST_CASE("kernel_value input validation") {
  const Hyperparameters p = default_params(2);
  CHECK_THROWS_AS(kernel_value(KernelSpec{}, p, Vector::Zero(2), Vector::Zero(3)), input_error);
  CHECK_THROWS_AS(kernel_value(KernelSpec{}, p, Vector::Zero(3), Vector::Zero(3)), input_error);
}

TEST_CASE("matrix-free matvec matches dense") {
  auto gen = testing::rng(5);
  const Matrix x = random_matrix(64, 2, gen);
  const Hyperparameters p = default_params(2, 1.3, 0.9, 0.05);
  for (KernelFamily fam : {KernelFamily::RBF, KernelFamily::Matern32}) {
    KernelSpec spec{fam};
    KernelOperator dense(spec, x, p, StorageMode::Dense);
    KernelOperator free(spec, x, p, StorageMode::MatrixFree, 7);  // uneven blocks
    const Vector v = random_vector(64, gen);
    const Vector want = dense.dense_hat().selfadjointView<Eigen::Lower>() * v;
    CHECK((dense.apply(v) - want).norm() / want.norm() < 1e-12);
    CHECK((free.apply(v) - want).norm() / want.norm() < 1e-12);
  }
}

TEST_CASE("matvec trivial cases") {
  Matrix x(1, 1);
  x << 0.4;
  const Hyperparameters p = default_params(1, 1.5, 1.0, 0.3);
  KernelOperator op(KernelSpec{}, x, p);
  const double expected = 1.5 * 1.5 + 0.3;
  CHECK(op.apply(Vector::Ones(1))[0] == Catch::Approx(expected).epsilon(1e-14));

  auto gen = testing::rng(6);
  KernelOperator op64(KernelSpec{}, random_matrix(64, 2, gen), default_params(2));
  CHECK(op64.apply(Vector::Zero(64)).norm() == 0.0);
}

TEST_CASE("matvec rejects bad input") {
  auto gen = testing::rng(7);
  KernelOperator op(KernelSpec{}, random_matrix(8, 1, gen), default_params(1));
  CHECK_THROWS_AS(op.apply(Vector::Zero(9)), input_error);
  Vector bad = Vector::Zero(8);
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(op.apply(bad), input_error);
  CHECK_THROWS_AS(op.deriv_apply(5, Vector::Zero(8)), input_error);
}

TEST_CASE("symmetry of the operator") {
  auto gen = testing::rng(8);
  KernelOperator op(KernelSpec{KernelFamily::Matern52}, random_matrix(48, 3, gen),
                    default_params(3, 1.1, 0.7, 0.02));
  for (int trial = 0; trial < 5; ++trial) {
    const Vector u = random_vector(48, gen), v = random_vector(48, gen);
    CHECK(u.dot(op.apply(v)) == Catch::Approx(v.dot(op.apply(u))).epsilon(1e-11));
  }
}

TEST_CASE("dense kernel matrices are PSD") {
  auto gen = testing::rng(9);
  for (KernelFamily fam : {KernelFamily::RBF, KernelFamily::Matern12, KernelFamily::Matern32,
                           KernelFamily::Matern52, KernelFamily::RationalQuadratic}) {
    Hyperparameters p = default_params(2, 1.0, 0.6);
    p.log_noise = std::log(1e-300);  // effectively zero noise
    KernelOperator op(KernelSpec{fam}, random_matrix(96, 2, gen), p);
    Eigen::SelfAdjointEigenSolver<Matrix> es(op.dense_hat());
    CHECK(es.eigenvalues().minCoeff() > -1e-10 * es.eigenvalues().maxCoeff());
  }
}

TEST_CASE("noise derivative is the identity") {
  auto gen = testing::rng(10);
  KernelOperator op(KernelSpec{}, random_matrix(16, 2, gen), default_params(2));
  const Vector v = random_vector(16, gen);
  CHECK((op.deriv_apply(noise_index(2), v) - v).norm() == 0.0);
}

TEST_CASE("derivative matvecs match finite differences of the dense matrix") {
  auto gen = testing::rng(11);
  const Matrix x = random_matrix(32, 2, gen);
  const Vector v = random_vector(32, gen);
  const double step = 1e-6;

  for (KernelFamily fam :
       {KernelFamily::RBF, KernelFamily::Matern32, KernelFamily::Matern12,
        KernelFamily::Matern52, KernelFamily::RationalQuadratic}) {
    KernelSpec spec{fam};
    const Hyperparameters p = default_params(2, 1.4, 0.8, 0.05);

    for (int which : {kOutputscaleIndex, lengthscale_index(0), lengthscale_index(1)}) {
      // central difference in the raw (non-log) parameter
      auto dense_at = [&](double raw) {
        Hyperparameters q = p;
        if (which == kOutputscaleIndex)
          q.log_outputscale = std::log(raw);
        else
          q.log_lengthscales[which - 1] = std::log(raw);
        return KernelOperator(spec, x, q).dense_hat();
      };
      const double raw0 = p.raw_value(which);
      const Matrix fd = (dense_at(raw0 + step) - dense_at(raw0 - step)) / (2.0 * step);
      const Vector want = fd.selfadjointView<Eigen::Lower>() * v;
      const Vector got = KernelOperator(spec, x, p).deriv_apply(which, v);
      INFO(family_name(fam) << " which=" << which);
      CHECK((got - want).norm() / std::max(want.norm(), 1e-12) < 1e-5);
    }
  }
}

TEST_CASE("outputscale derivative is (2/o) K on the noise-free part") {
  auto gen = testing::rng(12);
  const Matrix x = random_matrix(32, 1, gen);
  const Hyperparameters p = default_params(1, 2.0, 1.0, 0.1);
  KernelOperator op(KernelSpec{}, x, p);
  const Vector v = random_vector(32, gen);
  Matrix k0 = op.dense_hat();
  k0.diagonal().array() -= p.noise_variance();
  const Vector want = (2.0 / 2.0) * (k0.selfadjointView<Eigen::Lower>() * v);
  CHECK((op.deriv_apply(kOutputscaleIndex, v) - want).norm() / want.norm() < 1e-12);
}

TEST_CASE("cross kernel agrees with pairwise evaluation") {
  auto gen = testing::rng(13);
  const Matrix a = random_matrix(5, 2, gen), b = random_matrix(7, 2, gen);
  const Hyperparameters p = default_params(2, 1.2, 0.7);
  KernelSpec spec{KernelFamily::Matern32};
  const Matrix k = cross_kernel(spec, p, a, b);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 7; ++j)
      CHECK(k(i, j) ==
            Catch::Approx(kernel_value(spec, p, a.row(i), b.row(j))).margin(1e-13));
}

TEST_CASE("hyperparameter helpers") {
  Hyperparameters p = default_params(3, 2.0, 0.5, 0.01);
  CHECK(p.num_params() == 5);
  CHECK(p.raw_value(0) == Catch::Approx(2.0));
  CHECK(p.raw_value(2) == Catch::Approx(0.5));
  CHECK(p.raw_value(4) == Catch::Approx(0.01));
  CHECK_THROWS_AS(p.raw_value(5), input_error);
  const Vector packed = p.to_log_vector();
  const Hyperparameters q = Hyperparameters::from_log_vector(packed);
  CHECK(q.log_outputscale == p.log_outputscale);
  CHECK((q.log_lengthscales - p.log_lengthscales).norm() == 0.0);

  Hyperparameters bad = p;
  bad.log_noise = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(bad.validate(), input_error);
}
