#include "lls/adjust.hpp"

#include <string>

#include "lls/discretize.hpp"

namespace lls {

namespace {

int argmax_lowest(const Vector& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best;
}

SimplexVec normalized_or_undefined(Vector raw, const std::string& what, int index) {
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    if (raw(i) < 0.0) raw(i) = 0.0;
  const double total = raw.sum();
  if (total <= 0.0) fail(errc::undefined_posterior, what, index);
  return SimplexVec::proportional(raw);
}

}  // namespace

StochasticMatrix q_d_given_y(const StochasticMatrix& q_yd) {
  const Matrix& q = q_yd.mat();
  Matrix out(q.cols(), q.rows());
  for (Eigen::Index y = 0; y < q.rows(); ++y) {
    const double row_sum = q.row(y).sum();
    if (row_sum <= 0.0)
      fail(errc::zero_row, "class " + std::to_string(y) + " has zero mass in every domain",
           static_cast<int>(y));
    out.col(y) = q.row(y).transpose() / row_sum;
  }
  return StochasticMatrix(out);
}

Prediction adjust_predict(const StochasticMatrix& q_yd_hat, const Vector& f_x, int d_prime) {
  const int k = static_cast<int>(q_yd_hat.rows());
  const int r = static_cast<int>(q_yd_hat.cols());
  if (f_x.size() != r) fail(errc::shape_mismatch, "domain posterior length differs from r");
  if (d_prime < 0 || d_prime >= r) fail(errc::invalid_input, "domain index out of range");

  const StochasticMatrix q_dy = q_d_given_y(q_yd_hat);
  const Vector g_raw = pseudo_inverse_solve(q_dy.mat(), f_x);
  SimplexVec g = normalized_or_undefined(g_raw, "recovered class posterior has no mass", -1);

  Vector adjusted(k);
  for (int y = 0; y < k; ++y) adjusted(y) = q_dy(d_prime, y) * g[y];
  SimplexVec posterior = normalized_or_undefined(
      adjusted, "no class has mass in domain " + std::to_string(d_prime), d_prime);

  const int y_pred = argmax_lowest(posterior.vec());
  return {std::move(g), std::move(posterior), y_pred};
}

NaiveModel naive_train(const std::vector<int>& cluster_ids, const std::vector<int>& domains,
                       int m, int r, int k, const NmfOptions& opts) {
  auto table = tabularize(cluster_ids, domains, m, r);
  auto factors = nmf(table.q_cd, k, opts);
  return {std::move(factors.w), std::move(factors.h), factors.residual, factors.converged};
}

Prediction naive_predict(const StochasticMatrix& w_hat, const StochasticMatrix& h_hat,
                         int cluster_id, int d_prime) {
  const int k = static_cast<int>(h_hat.rows());
  if (w_hat.cols() != k) fail(errc::shape_mismatch, "factor shapes disagree on k");
  if (cluster_id < 0 || cluster_id >= w_hat.rows())
    fail(errc::invalid_input, "cluster index out of range");
  if (d_prime < 0 || d_prime >= h_hat.cols())
    fail(errc::invalid_input, "domain index out of range");

  Vector adjusted(k), marginal(k);
  const Vector priors = h_hat.mat().rowwise().mean();
  for (int y = 0; y < k; ++y) {
    adjusted(y) = w_hat(cluster_id, y) * h_hat(y, d_prime);
    marginal(y) = w_hat(cluster_id, y) * priors(y);
  }
  SimplexVec posterior = normalized_or_undefined(
      adjusted, "no class has mass for cluster " + std::to_string(cluster_id) + " in domain " +
                    std::to_string(d_prime),
      d_prime);
  SimplexVec q_y = normalized_or_undefined(
      marginal, "no class has mass for cluster " + std::to_string(cluster_id), cluster_id);

  const int y_pred = argmax_lowest(posterior.vec());
  return {std::move(q_y), std::move(posterior), y_pred};
}

}  // namespace lls
