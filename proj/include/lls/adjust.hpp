#pragma once

#include "lls/core.hpp"
#include "lls/factorize.hpp"

#include <vector>

namespace lls {

// ---------------------------------------------------------------------------
// Bayes adjustment: turn the recovered class-given-domain marginals and a
// domain-posterior vector into label posteriors, per point and per (point,
// domain) pair. Also the naive cluster-level predictor used as a baseline.
// ---------------------------------------------------------------------------

struct Prediction {
  SimplexVec q_y_given_x;    // recovered q(y|x), after clipping negatives
  SimplexVec q_y_given_x_d;  // domain-adjusted posterior q(y|x, d')
  int y_pred = 0;            // argmax of q_y_given_x_d, ties to the lowest class
};

// Transpose of q_yd with each class row normalized to a distribution over
// domains: out[d, y] = q_yd[y, d] / sum_d' q_yd[y, d']. A class with zero mass
// in every domain raises ZeroRow with that class index.
StochasticMatrix q_d_given_y(const StochasticMatrix& q_yd);

// Recovers g = pseudo-inverse of Q_{D|Y} applied to f_x, clips negative
// entries (sampling noise; exact inputs never produce them) and renormalizes;
// the domain-adjusted posterior is proportional to Q_{D|Y}[d', y] * g[y].
// Throws RankDeficient when Q_{D|Y} is numerically rank-deficient and
// UndefinedPosterior when every class has zero adjusted mass.
Prediction adjust_predict(const StochasticMatrix& q_yd_hat, const Vector& f_x, int d_prime);

struct NaiveModel {
  StochasticMatrix w;  // m x k, cluster given class
  StochasticMatrix h;  // k x r, class given domain
  double residual = 0.0;
  bool converged = false;
};

// Tabularizes cluster/domain co-occurrence counts and factorizes the resulting
// cluster-given-domain matrix; the caller keeps the clustering that produced
// cluster_ids and routes new points through naive_predict.
NaiveModel naive_train(const std::vector<int>& cluster_ids, const std::vector<int>& domains,
                       int m, int r, int k, const NmfOptions& opts);

// Cluster-level posterior q(y|c, d') proportional to w[c, y] * h[y, d']; every
// point in a cluster gets the same prediction. The domain-free field uses the
// uniform-domain class prior q(y) = mean_d h[y, d]. Throws UndefinedPosterior
// when every class has zero mass at (c, d').
Prediction naive_predict(const StochasticMatrix& w_hat, const StochasticMatrix& h_hat,
                         int cluster_id, int d_prime);

}  // namespace lls
