#include <catch2/catch_amalgamated.hpp>

#include "gpkrylov/oracle.hpp"
#include "support.hpp"

using namespace gpkrylov;
using namespace gpkrylov::oracle;
using gpkrylov::testing::random_spd;

TEST_CASE("dense_logdet on trivial matrices") {
  CHECK(dense_logdet(DenseSpd(Matrix::Identity(5, 5))) == Catch::Approx(0.0).margin(1e-14));
  Matrix d = Vector{{2.0, 3.0}}.asDiagonal();
  CHECK(dense_logdet(DenseSpd(d)) == Catch::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("dense_logdet dual routes agree on random SPD") {
  auto gen = testing::rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    DenseSpd a(random_spd(40, gen));
    const double via_eig = a.eigenvalues().array().log().sum();
    CHECK(dense_logdet(a) == Catch::Approx(via_eig).epsilon(1e-10));
  }
}

TEST_CASE("dense_matrix_log basics") {
  CHECK(dense_matrix_log(DenseSpd(Matrix::Identity(4, 4))).norm() ==
        Catch::Approx(0.0).margin(1e-14));
  Matrix d = Vector{{std::exp(1.0), std::exp(2.0)}}.asDiagonal();
  const Matrix lg = dense_matrix_log(DenseSpd(d));
  CHECK(lg(0, 0) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(lg(1, 1) == Catch::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(lg(0, 1)) < 1e-14);
}

TEST_CASE("matrix log round-trips through exp") {
  auto gen = testing::rng(12);
  DenseSpd a(random_spd(64, gen));
  const Matrix lg = dense_matrix_log(a);
  Eigen::SelfAdjointEigenSolver<Matrix> es(lg);
  const Matrix back =
      es.eigenvectors() * es.eigenvalues().array().exp().matrix().asDiagonal() *
      es.eigenvectors().transpose();
  CHECK((back - a.matrix()).norm() / a.matrix().norm() < 1e-9);
}

TEST_CASE("dense_trace_inv_deriv") {
  auto gen = testing::rng(13);
  const Matrix m = random_spd(20, gen);
  DenseSpd a(m);

  SECTION("D = A gives n") {
    CHECK(dense_trace_inv_deriv(a, m) == Catch::Approx(20.0).epsilon(1e-10));
  }
  SECTION("D = I gives sum of inverse eigenvalues") {
    const double expected = a.eigenvalues().cwiseInverse().sum();
    CHECK(dense_trace_inv_deriv(a, Matrix::Identity(20, 20)) ==
          Catch::Approx(expected).epsilon(1e-10));
  }
  SECTION("hand-computed diagonal case") {
    Matrix d2 = Vector{{2.0, 4.0}}.asDiagonal();
    CHECK(dense_trace_inv_deriv(DenseSpd(d2), Matrix::Identity(2, 2)) ==
          Catch::Approx(0.75).epsilon(1e-13));
  }
}

TEST_CASE("DenseSpd rejects bad input") {
  Matrix asym(2, 2);
  asym << 1.0, 2.0, 0.0, 1.0;
  CHECK_THROWS_AS(DenseSpd(asym), input_error);

  Matrix indef = Vector{{1.0, -1.0}}.asDiagonal();
  CHECK_THROWS_AS(DenseSpd(indef), numerical_error);
}
