#include "lls/core.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <string>

namespace lls {

const char* errc_name(errc c) {
  switch (c) {
    case errc::rank_deficient: return "RankDeficient";
    case errc::degenerate_input: return "DegenerateInput";
    case errc::zero_column: return "ZeroColumn";
    case errc::zero_row: return "ZeroRow";
    case errc::generation_budget_exceeded: return "GenerationBudgetExceeded";
    case errc::out_of_support: return "OutOfSupport";
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::training_diverged: return "TrainingDiverged";
    case errc::invalid_input: return "InvalidInput";
    case errc::insufficient_distinct_points: return "InsufficientDistinctPoints";
    case errc::empty_domain: return "EmptyDomain";
    case errc::invalid_rank: return "InvalidRank";
    case errc::anchor_deficient: return "AnchorDeficient";
    case errc::undefined_posterior: return "UndefinedPosterior";
    case errc::parse_error: return "ParseError";
    case errc::io_error: return "IoError";
  }
  return "UnknownError";
}

namespace {

constexpr double kSumTol = 1e-6;       // accepted deviation of a raw distribution from sum 1
constexpr double kNegClampTol = 1e-9;  // entries in [-kNegClampTol, 0) are rounding noise

// Clamps rounding-level negatives to zero, rejects anything more negative.
void sanitize_nonnegative(Vector& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v(i) < 0.0) {
      if (v(i) < -kNegClampTol)
        fail(errc::invalid_input,
             std::string(what) + " has negative entry at " + std::to_string(i),
             static_cast<long>(i));
      v(i) = 0.0;
    }
    if (!std::isfinite(v(i)))
      fail(errc::invalid_input, std::string(what) + " has non-finite entry",
           static_cast<long>(i));
  }
}

}  // namespace

SimplexVec::SimplexVec(Vector v) : v_(std::move(v)) {
  if (v_.size() == 0) fail(errc::invalid_input, "simplex vector must be non-empty");
  sanitize_nonnegative(v_, "simplex vector");
  const double s = v_.sum();
  if (std::abs(s - 1.0) > kSumTol)
    fail(errc::invalid_input,
         "simplex vector sums to " + std::to_string(s) + ", expected 1 within 1e-6");
  v_ /= s;
}

SimplexVec SimplexVec::proportional(Vector weights) {
  if (weights.size() == 0) fail(errc::invalid_input, "simplex vector must be non-empty");
  sanitize_nonnegative(weights, "weight vector");
  const double s = weights.sum();
  if (s <= 0.0) fail(errc::invalid_input, "weight vector has zero sum");
  weights /= s;
  return SimplexVec(std::move(weights), unchecked_tag{});
}

StochasticMatrix::StochasticMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.size() == 0) fail(errc::invalid_input, "stochastic matrix must be non-empty");
  for (Eigen::Index j = 0; j < m_.cols(); ++j) {
    Vector col = m_.col(j);
    sanitize_nonnegative(col, "stochastic matrix column");
    const double s = col.sum();
    if (std::abs(s - 1.0) > kSumTol)
      fail(errc::invalid_input,
           "column " + std::to_string(j) + " sums to " + std::to_string(s) +
               ", expected 1 within 1e-6",
           static_cast<long>(j));
    m_.col(j) = col / s;
  }
}

StochasticMatrix StochasticMatrix::proportional_columns(Matrix weights) {
  if (weights.size() == 0) fail(errc::invalid_input, "stochastic matrix must be non-empty");
  for (Eigen::Index j = 0; j < weights.cols(); ++j) {
    Vector col = weights.col(j);
    sanitize_nonnegative(col, "matrix column");
    const double s = col.sum();
    if (s <= 0.0)
      fail(errc::zero_column, "column " + std::to_string(j) + " has zero sum",
           static_cast<long>(j));
    weights.col(j) = col / s;
  }
  return StochasticMatrix(std::move(weights), unchecked_tag{});
}

SimplexVec StochasticMatrix::col(int j) const {
  return SimplexVec::proportional(m_.col(j));
}

void ProblemParams::validate(bool strict_m) const {
  if (k < 1) fail(errc::invalid_input, "k must be >= 1");
  if (r < k) fail(errc::invalid_input, "r must be >= k");
  if (alpha <= 0.0) fail(errc::invalid_input, "alpha must be > 0");
  if (kappa_max < 1.0) fail(errc::invalid_input, "kappa_max must be >= 1");
  if (epsilon <= 0.0 || epsilon > 1.0) fail(errc::invalid_input, "epsilon must be in (0, 1]");
  if (m < 1) fail(errc::invalid_input, "m must be >= 1");
  if (strict_m && m < k) fail(errc::invalid_input, "m must be >= k");
}

Vector pseudo_inverse_solve(const Matrix& a, const Vector& b) {
  if (a.rows() < a.cols())
    fail(errc::shape_mismatch, "pseudo_inverse_solve expects rows >= cols");
  if (a.rows() != b.size())
    fail(errc::shape_mismatch, "matrix rows and vector size differ");
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smax > 0.0) || smax / smin > 1e10)
    fail(errc::rank_deficient, "matrix condition number exceeds 1e10");
  return a.colPivHouseholderQr().solve(b);
}

double condition_number_2norm(const Matrix& a) {
  if (a.size() == 0) fail(errc::degenerate_input, "empty matrix");
  if (a.isZero(0.0)) fail(errc::degenerate_input, "all-zero matrix");
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (smin < 1e-14 * smax) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

ColumnNormalizeResult column_normalize(const Matrix& a) {
  if (a.size() == 0) fail(errc::invalid_input, "empty matrix");
  Vector scales(a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    Vector col = a.col(j);
    sanitize_nonnegative(col, "matrix column");
    scales(j) = col.sum();
  }
  return {StochasticMatrix::proportional_columns(a), scales};
}

}  // namespace lls
