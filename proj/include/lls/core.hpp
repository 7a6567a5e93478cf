#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "lls/error.hpp"

namespace lls {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Probability vector on the simplex. Construction normalizes the input; a raw
// vector claiming to be a distribution must already sum to 1 within 1e-6 and be
// non-negative (entries above -1e-9 are clamped to zero). `proportional` builds
// a simplex vector from arbitrary non-negative weights with positive sum.
class SimplexVec {
 public:
  explicit SimplexVec(Vector v);
  static SimplexVec proportional(Vector weights);

  const Vector& vec() const noexcept { return v_; }
  int dim() const noexcept { return static_cast<int>(v_.size()); }
  double operator[](int i) const { return v_(i); }

 private:
  struct unchecked_tag {};
  SimplexVec(Vector v, unchecked_tag) : v_(std::move(v)) {}
  Vector v_;
};

// Column-stochastic matrix: every column a distribution. Same validation rules
// as SimplexVec, applied per column.
class StochasticMatrix {
 public:
  explicit StochasticMatrix(Matrix m);
  static StochasticMatrix proportional_columns(Matrix weights);

  const Matrix& mat() const noexcept { return m_; }
  int rows() const noexcept { return static_cast<int>(m_.rows()); }
  int cols() const noexcept { return static_cast<int>(m_.cols()); }
  double operator()(int i, int j) const { return m_(i, j); }
  SimplexVec col(int j) const;

 private:
  struct unchecked_tag {};
  StochasticMatrix(Matrix m, unchecked_tag) : m_(std::move(m)) {}
  Matrix m_;
};

// Shared problem dimensions and generation knobs.
//   k          number of latent classes
//   r          number of domains (>= k)
//   alpha      Dirichlet concentration for label-marginal sampling (columns ~ Dir(alpha/k * 1))
//   kappa_max  rejection bound on cond(Q_{Y|D})
//   epsilon    anchor-region mass lower bound
//   m          cluster count for discretization (>= k on the standard path; the
//              cluster-count ablation may relax this deliberately)
struct ProblemParams {
  int k = 2;
  int r = 2;
  double alpha = 1.0;
  double kappa_max = 10.0;
  double epsilon = 0.1;
  int m = 2;
  std::uint64_t seed = 0;

  // strict_m = false permits m < k (cluster-count ablation).
  void validate(bool strict_m = true) const;
};

// Least-squares solve pinv(A) * b for A (r x k, r >= k) of full column rank.
// Rank deficiency is detected via a condition threshold of 1e10.
Vector pseudo_inverse_solve(const Matrix& a, const Vector& b);

// Ratio of extreme singular values. Returns +infinity when the smallest
// singular value is below 1e-14 * sigma_max. All-zero input is degenerate.
double condition_number_2norm(const Matrix& a);

struct ColumnNormalizeResult {
  StochasticMatrix matrix;
  Vector scales;  // original column sums; a = matrix * diag(scales)
};

// Divide each column by its sum. Columns must be non-negative with positive sum.
ColumnNormalizeResult column_normalize(const Matrix& a);

}  // namespace lls
