#ifndef GPKRYLOV_TESTS_SUPPORT_HPP
#define GPKRYLOV_TESTS_SUPPORT_HPP

#include <random>

#include "gpkrylov/common.hpp"
#include "gpkrylov/kernels.hpp"

namespace gpkrylov::testing {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& gen) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = gauss(gen);
  return m;
}

inline Vector random_vector(Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = gauss(gen);
  return v;
}

/// Random SPD matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(Index n, std::mt19937_64& gen, double lo = 0.5, double hi = 4.0) {
  Matrix a = random_matrix(n, n, gen);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  std::uniform_real_distribution<double> unif(lo, hi);
  Vector lam(n);
  for (Index i = 0; i < n; ++i) lam[i] = unif(gen);
  return q * lam.asDiagonal() * q.transpose();
}

inline Hyperparameters default_params(int d, double outputscale = 1.0, double lengthscale = 1.0,
                                      double noise = 1e-2) {
  Hyperparameters p;
  p.log_outputscale = std::log(outputscale);
  p.log_lengthscales = Vector::Constant(d, std::log(lengthscale));
  p.log_noise = std::log(noise);
  return p;
}

/// Central finite difference of a scalar function.
template <typename F>
double central_diff(F&& f, double x, double step) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

}  // namespace gpkrylov::testing

#endif
