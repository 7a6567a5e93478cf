#pragma once

#include <cstdint>
#include <vector>

#include "lls/core.hpp"

namespace lls {

// ---------------------------------------------------------------------------
// Non-negative factorization of the cluster-given-domain matrix:
//   Q_{c(X)|D} ~= W H  with W ~= Q_{c(X)|Y} and H ~= Q_{Y|D}.
// Two solvers share one output convention: multiplicative updates (general
// purpose, restarted) and a successive-projection anchor solver that is exact
// on separable inputs and doubles as the oracle for the first.
// ---------------------------------------------------------------------------

struct NmfOptions {
  int max_iter = 2000;
  double tol = 1e-9;  // residual at or below tol counts as converged
  int n_init = 10;    // independent restarts; best residual wins, ties to the earliest
  std::uint64_t seed = 0;
  bool allow_overcomplete = false;  // permit k > min(m, r) for deliberate ablations
  bool record_curve = false;        // keep the winning restart's residual trajectory
  int jobs = 1;                     // restarts run on this many threads; results
                                    // are identical regardless of the thread count
  int stall_window = 100;           // give up on a restart when the residual improves
  double stall_rtol = 1e-6;         // by less than stall_rtol relatively per window
  int screen_iter = 0;              // when > 0, restarts first run this many
                                    // iterations and only the best one continues
                                    // on to the full max_iter budget
};

struct NormalizedFactors {
  StochasticMatrix w;  // m x k, column-stochastic
  StochasticMatrix h;  // k x r, column-stochastic
  Vector h_col_sums_prenorm;
};

// Output normalization, in this order: divide each column of W by its sum,
// multiply the matching row of H by that same sum (the product W H is
// unchanged), then divide each column of H by its sum. The last step is the
// only lossy one; the pre-normalization column sums are kept for diagnosis.
NormalizedFactors normalize_factors(const Matrix& w_raw, const Matrix& h_raw);

struct FactorizationResult {
  StochasticMatrix w;
  StochasticMatrix h;
  double residual = 0.0;  // ||V - W H||_F before the final H normalization
  bool converged = false;
  int iterations = 0;
  Vector h_col_sums_prenorm;
  std::vector<double> residual_curve;  // filled when record_curve is set
};

// Frobenius multiplicative updates from uniform random init.
FactorizationResult nmf(const StochasticMatrix& v, int k, const NmfOptions& opts);

// Successive projection on the row-normalized input finds k anchor rows; the
// remaining coefficients come from non-negative least squares. Exact on inputs
// with an anchor row per class; near-duplicate anchors (projection residual
// below 1e-10 before k rows are found) raise AnchorDeficient.
FactorizationResult spa_anchor_nmf(const StochasticMatrix& v, int k);

// Lawson-Hanson active-set solve of min ||a x - y|| subject to x >= 0.
Vector nnls(const Matrix& a, const Vector& y);

}  // namespace lls
