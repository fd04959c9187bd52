#ifndef GPKRYLOV_DATASET_HPP
#define GPKRYLOV_DATASET_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gpkrylov/common.hpp"
#include "gpkrylov/csv.hpp"
#include "gpkrylov/kernels.hpp"

namespace gpkrylov {

struct Dataset {
  Matrix x;
  Vector y;

  Index size() const { return x.rows(); }
  int dim() const { return static_cast<int>(x.cols()); }
};

struct SyntheticDataset {
  Dataset data;
  KernelSpec spec;
  Hyperparameters truth;
  Vector latent;  // noise-free GP draw
  std::uint64_t seed = 0;
};

/// Draws n iid standard normal inputs and samples targets from the GP prior
/// at the ground-truth hyperparameters plus observation noise. Bitwise
/// reproducible per seed. Sampling factorizes the dense kernel matrix, so
/// this is O(n^3).
inline SyntheticDataset gen_synthetic(Index n, int d, std::uint64_t seed, const KernelSpec& spec,
                                      const Hyperparameters& truth) {
  require(n >= 1, "gen_synthetic: n must be >= 1");
  require(d >= 1, "gen_synthetic: d must be >= 1");
  require(truth.dim() == d, "gen_synthetic: hyperparameter dimension mismatch");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix x(n, d);
  for (Index i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = gauss(rng);
  Vector g(n), eps(n);
  for (Index i = 0; i < n; ++i) g[i] = gauss(rng);
  for (Index i = 0; i < n; ++i) eps[i] = gauss(rng);

  // latent f = chol(K + jitter I) g
  KernelOperator op(spec, x, truth, n <= 4096 ? StorageMode::Dense : StorageMode::MatrixFree);
  Matrix k = op.dense_hat();
  const double o2 = std::pow(truth.outputscale(), 2);
  k.diagonal().array() -= truth.noise_variance();  // noise-free prior covariance
  Eigen::LLT<Matrix> llt;
  double jitter = 1e-12 * o2;
  for (int attempt = 0; attempt < 8; ++attempt, jitter *= 100.0) {
    Matrix kj = k;
    kj.diagonal().array() += jitter;
    llt.compute(kj);
    if (llt.info() == Eigen::Success) break;
  }
  if (llt.info() != Eigen::Success)
    throw numerical_error("gen_synthetic: prior covariance factorization failed");

  SyntheticDataset out;
  out.latent = llt.matrixL() * g;
  out.data.x = std::move(x);
  out.data.y = out.latent + std::sqrt(truth.noise_variance()) * eps;
  out.spec = spec;
  out.truth = truth;
  out.seed = seed;
  return out;
}

/// Column statistics fitted on the training split; transforms are exactly
/// invertible.
struct Standardizer {
  Vector feature_mean, feature_std;
  double target_mean = 0.0, target_std = 1.0;

  Matrix transform_x(const Matrix& x) const {
    return (x.rowwise() - feature_mean.transpose()).array().rowwise() /
           feature_std.transpose().array();
  }
  Vector transform_y(const Vector& y) const { return (y.array() - target_mean) / target_std; }
  Matrix invert_x(const Matrix& x) const {
    return (x.array().rowwise() * feature_std.transpose().array()).matrix().rowwise() +
           feature_mean.transpose();
  }
  Vector invert_y(const Vector& y) const { return (y.array() * target_std + target_mean); }
};

struct DataSplits {
  Dataset train, validation, test;
  Standardizer stats;
  bool standardized = false;
  std::vector<std::string> feature_names;
  std::string target_name;
};

struct SplitFractions {
  double train = 0.64, validation = 0.16, test = 0.20;
};

namespace detail {

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw input_error("load_csv: non-numeric cell '" + cell + "' at data row " +
                      std::to_string(row + 1) + ", column " + std::to_string(col + 1));
  }
}

inline bool all_numeric(const std::vector<std::string>& cells) {
  for (const auto& c : cells) {
    try {
      std::size_t pos = 0;
      std::stod(c, &pos);
      if (pos != c.size()) return false;
    } catch (const std::exception&) {
      return false;
    }
  }
  return !cells.empty();
}

inline Dataset take_rows(const Matrix& x, const Vector& y, const std::vector<Index>& order,
                         std::size_t begin, std::size_t count) {
  Dataset d;
  d.x.resize(static_cast<Index>(count), x.cols());
  d.y.resize(static_cast<Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    d.x.row(static_cast<Index>(i)) = x.row(order[begin + i]);
    d.y[static_cast<Index>(i)] = y[order[begin + i]];
  }
  return d;
}

}  // namespace detail

/// Loads a rectangular numeric CSV with a header row, shuffles it with the
/// given seed and splits it. Features and targets are standardized to zero
/// mean / unit variance using statistics of the training split only.
inline DataSplits load_csv(const std::string& path, const std::string& target_column,
                           bool standardize, const SplitFractions& split, std::uint64_t seed) {
  CsvTable table = read_csv_table(path);
  if (table.columns.empty()) throw input_error("load_csv: " + path + " is empty");
  if (detail::all_numeric(table.columns))
    throw input_error("load_csv: " + path + " has no header row");
  require(split.train >= 0 && split.validation >= 0 && split.test >= 0 &&
              split.train + split.validation + split.test <= 1.0 + 1e-9,
          "load_csv: split fractions must be nonnegative and sum to at most 1");

  const int target = table.column_index(target_column);
  const Index n = static_cast<Index>(table.rows.size());
  require(n >= 1, "load_csv: no data rows in " + path);
  const int ncols = static_cast<int>(table.columns.size());
  const int d = ncols - 1;
  require(d >= 1, "load_csv: need at least one feature column");

  Matrix x(n, d);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    if (static_cast<int>(row.size()) != ncols)
      throw input_error("load_csv: data row " + std::to_string(i + 1) + " has " +
                        std::to_string(row.size()) + " cells, expected " + std::to_string(ncols));
    int fc = 0;
    for (int c = 0; c < ncols; ++c) {
      const double v = detail::parse_cell(row[static_cast<std::size_t>(c)],
                                          static_cast<std::size_t>(i), static_cast<std::size_t>(c));
      if (c == target)
        y[i] = v;
      else
        x(i, fc++) = v;
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  for (Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Index> pick(0, i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }

  const auto n_total = static_cast<std::size_t>(n);
  const auto n_train = std::min(
      n_total, static_cast<std::size_t>(std::llround(split.train * static_cast<double>(n))));
  const auto n_val = std::min(
      n_total - n_train,
      static_cast<std::size_t>(std::llround(split.validation * static_cast<double>(n))));
  const auto n_test = std::min(
      n_total - n_train - n_val,
      static_cast<std::size_t>(std::llround(split.test * static_cast<double>(n))));

  DataSplits out;
  out.train = detail::take_rows(x, y, order, 0, n_train);
  out.validation = detail::take_rows(x, y, order, n_train, n_val);
  out.test = detail::take_rows(x, y, order, n_train + n_val, n_test);
  out.target_name = target_column;
  for (int c = 0; c < ncols; ++c)
    if (c != target) out.feature_names.push_back(table.columns[static_cast<std::size_t>(c)]);

  if (standardize) {
    require(out.train.size() >= 2, "load_csv: standardization needs at least two training rows");
    Standardizer s;
    s.feature_mean = out.train.x.colwise().mean();
    Matrix centered = out.train.x.rowwise() - s.feature_mean.transpose();
    s.feature_std =
        (centered.colwise().squaredNorm() / static_cast<double>(out.train.size())).cwiseSqrt();
    for (int j = 0; j < d; ++j)
      if (!(s.feature_std[j] > 1e-12))
        throw input_error("load_csv: column '" + out.feature_names[static_cast<std::size_t>(j)] +
                          "' is constant on the training split; cannot standardize");
    s.target_mean = out.train.y.mean();
    s.target_std = std::sqrt((out.train.y.array() - s.target_mean).square().sum() /
                             static_cast<double>(out.train.size()));
    if (!(s.target_std > 1e-12))
      throw input_error("load_csv: target column '" + target_column +
                        "' is constant on the training split; cannot standardize");
    for (Dataset* part : {&out.train, &out.validation, &out.test}) {
      if (part->size() == 0) continue;
      part->x = s.transform_x(part->x);
      part->y = s.transform_y(part->y);
    }
    out.stats = std::move(s);
    out.standardized = true;
  }
  return out;
}

/// Writes a dataset as a numeric CSV (features x0..x{d-1}, target y).
inline void write_dataset_csv(const Dataset& data, const std::string& path,
                              const std::string& schema = "dataset v1") {
  std::vector<std::string> columns;
  for (int j = 0; j < data.dim(); ++j) columns.push_back("x" + std::to_string(j));
  columns.push_back("y");
  CsvWriter w(path, schema, columns);
  std::vector<std::string> cells(columns.size());
  for (Index i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.dim(); ++j)
      cells[static_cast<std::size_t>(j)] = CsvWriter::format(data.x(i, j));
    cells.back() = CsvWriter::format(data.y[i]);
    w.write_row(cells);
  }
}

}  // namespace gpkrylov

#endif
