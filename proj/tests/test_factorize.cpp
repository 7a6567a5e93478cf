#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lls/factorize.hpp"
#include "lls/rng.hpp"
#include "lls/synthgen.hpp"
#include "test_util.hpp"

using lls::Matrix;
using lls::Vector;

namespace {

// Brute-force row matching for small k: the permutation minimizing the total
// absolute difference between h and the reference, applied to h's rows.
double best_perm_error(const Matrix& h, const Matrix& ref) {
  const int k = static_cast<int>(h.rows());
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst_entry = 0.0;
    for (int i = 0; i < k; ++i)
      worst_entry =
          std::max(worst_entry, (h.row(perm[i]) - ref.row(i)).cwiseAbs().maxCoeff());
    best = std::min(best, worst_entry);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

struct ExactInstance {
  Matrix w;  // m x k column-stochastic with anchor rows
  Matrix h;  // k x r column-stochastic
  Matrix v;  // product
};

ExactInstance random_anchored(int m, int k, int r, double kappa_max, std::uint64_t seed,
                              int anchors = 1, bool pair_supports = false) {
  lls::ProblemParams params;
  params.k = k;
  params.r = r;
  params.alpha = 3.0;
  params.kappa_max = kappa_max;
  params.m = m;
  params.seed = seed;
  auto rng = lls::make_rng(seed);
  auto marg = pair_supports ? lls::sample_pair_support_marginals(params, rng)
                            : lls::sample_label_marginals(params, rng);
  auto q_xy = lls::sample_anchored_word_distribution(m, k, anchors, rng);
  return {q_xy.mat(), marg.q_yd.mat(), q_xy.mat() * marg.q_yd.mat()};
}

}  // namespace

TEST_CASE("factor normalization order with hand-computed values") {
  Matrix w_raw(3, 2);
  w_raw << 1.0, 1.0,
           1.0, 3.0,
           2.0, 0.0;
  Matrix h_raw(2, 2);
  h_raw << 1.0, 2.0,
           3.0, 1.0;
  auto n = lls::normalize_factors(w_raw, h_raw);
  // W columns sum to 4 and 4; scales fold into H rows: [[4,8],[12,4]].
  CHECK(n.w(0, 0) == 0.25);
  CHECK(n.w(1, 1) == 0.75);
  CHECK(n.h_col_sums_prenorm(0) == 16.0);
  CHECK(n.h_col_sums_prenorm(1) == 12.0);
  CHECK(n.h(0, 0) == 0.25);
  CHECK(n.h(1, 0) == 0.75);
  CHECK(n.h(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  // Folding the scales preserves the product exactly (before the final step).
  Matrix h_mid = n.h.mat() * n.h_col_sums_prenorm.asDiagonal();
  CHECK((n.w.mat() * h_mid - w_raw * h_raw).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rank-one input factors into the column and a row of ones") {
  Vector col(4);
  col << 0.4, 0.3, 0.2, 0.1;
  Matrix v(4, 3);
  for (int j = 0; j < 3; ++j) v.col(j) = col;
  lls::NmfOptions opts;
  opts.seed = 5;
  auto res = lls::nmf(lls::StochasticMatrix(v), 1, opts);
  CHECK(res.residual <= 1e-6);
  CHECK(res.converged);
  CHECK((res.w.mat().col(0) - col).cwiseAbs().maxCoeff() < 1e-6);
  for (int j = 0; j < 3; ++j) CHECK(res.h(0, j) == 1.0);
}

TEST_CASE("multiplicative updates recover anchored factors with identity marginals") {
  auto rng = lls::make_rng(3);
  auto q_xy = lls::sample_anchored_word_distribution(6, 3, 2, rng);
  Matrix v = q_xy.mat();  // identity marginals: V = W I
  lls::NmfOptions opts;
  opts.seed = 11;
  auto res = lls::nmf(lls::StochasticMatrix(v), 3, opts);
  CHECK(res.residual <= 1e-6);
  CHECK(res.converged);
  CHECK(best_perm_error(res.h.mat(), Matrix::Identity(3, 3)) < 1e-6);
  CHECK(best_perm_error(res.w.mat().transpose(), q_xy.mat().transpose()) < 1e-6);
}

TEST_CASE("multiplicative updates recover small anchored products") {
  // Domains supported on class pairs leave the anchored factorization unique;
  // dense marginal columns would not (any exact factorization with slightly
  // widened mixing directions also reconstructs V, and plain multiplicative
  // updates may land on one).
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    auto inst = random_anchored(6, 3, 5, 5.0, seed, 1, true);
    lls::NmfOptions opts;
    opts.seed = seed * 7;
    opts.max_iter = 400000;
    opts.screen_iter = 4000;
    opts.tol = 1e-6;
    auto res = lls::nmf(lls::StochasticMatrix(inst.v), 3, opts);
    CHECK(best_perm_error(res.h.mat(), inst.h) < 1e-3);
  }
}

TEST_CASE("multiplicative update residuals never increase") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Matrix v(5, 4);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) v(i, j) = u(rng);
    for (int j = 0; j < 4; ++j) v.col(j) /= v.col(j).sum();
    lls::NmfOptions opts;
    opts.seed = seed;
    opts.n_init = 1;
    opts.max_iter = 300;
    opts.record_curve = true;
    auto res = lls::nmf(lls::StochasticMatrix(v), 2, opts);
    REQUIRE(res.residual_curve.size() >= 2);
    for (size_t i = 1; i < res.residual_curve.size(); ++i)
      CHECK(res.residual_curve[i] <= res.residual_curve[i - 1] + 1e-10);
    // Noisy full-rank input at rank 2 cannot reach the exact-input tolerance.
    CHECK_FALSE(res.converged);
  }
}

TEST_CASE("nmf is deterministic and rejects bad ranks") {
  auto inst = random_anchored(6, 2, 4, 20.0, 21);
  lls::StochasticMatrix v(inst.v);
  lls::NmfOptions opts;
  opts.seed = 2;
  auto a = lls::nmf(v, 2, opts);
  auto b = lls::nmf(v, 2, opts);
  CHECK((a.w.mat() - b.w.mat()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.h.mat() - b.h.mat()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.residual == b.residual);

  // Thread count must not change the result: every restart is an independent
  // deterministic stream and selection is by (residual, restart index).
  opts.jobs = 3;
  auto c = lls::nmf(v, 2, opts);
  CHECK((a.w.mat() - c.w.mat()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.h.mat() - c.h.mat()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.residual == c.residual);

  CHECK_LLS_THROWS(invalid_rank, lls::nmf(v, 0, opts));
  CHECK_LLS_THROWS(invalid_rank, lls::nmf(v, 5, opts));  // > min(6, 4)
  opts.allow_overcomplete = true;
  CHECK_NOTHROW(lls::nmf(v, 5, opts));
}

TEST_CASE("screening keeps only the best restart running") {
  auto inst = random_anchored(8, 3, 6, 10.0, 5, 2, true);
  lls::StochasticMatrix v(inst.v);
  lls::NmfOptions opts;
  opts.seed = 9;
  opts.record_curve = true;
  opts.max_iter = 50000;
  opts.screen_iter = 500;
  auto res = lls::nmf(v, 3, opts);
  // The winning restart's curve spans screening plus the polish phase and
  // stays monotone across the phase boundary.
  CHECK(res.residual_curve.size() == static_cast<size_t>(res.iterations) + 1);
  for (size_t i = 1; i < res.residual_curve.size(); ++i)
    CHECK(res.residual_curve[i] <= res.residual_curve[i - 1] + 1e-10);
  CHECK(res.residual <= 1e-4);
}

TEST_CASE("nnls matches exhaustive active-set enumeration") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    Matrix a(6, 3);
    Vector y(6);
    for (int i = 0; i < 6; ++i) {
      y(i) = n01(rng);
      for (int j = 0; j < 3; ++j) a(i, j) = n01(rng);
    }
    Vector x = lls::nnls(a, y);
    CHECK(x.minCoeff() >= 0.0);
    const double obj = (a * x - y).squaredNorm();

    // Oracle: try every support set, solve unconstrained on it, keep feasible.
    double best = y.squaredNorm();  // empty support
    for (int mask = 1; mask < 8; ++mask) {
      std::vector<int> idx;
      for (int j = 0; j < 3; ++j)
        if (mask & (1 << j)) idx.push_back(j);
      Matrix sub(6, static_cast<Eigen::Index>(idx.size()));
      for (size_t j = 0; j < idx.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = a.col(idx[j]);
      Vector z = sub.colPivHouseholderQr().solve(y);
      if (z.minCoeff() < 0.0) continue;
      best = std::min(best, (sub * z - y).squaredNorm());
    }
    CHECK(obj <= best + 1e-8);
  }
}

TEST_CASE("nnls recovers exact non-negative solutions") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix a(5, 3);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = u(rng);
  Vector x_true(3);
  x_true << 0.7, 0.0, 1.3;
  Vector x = lls::nnls(a, a * x_true);
  CHECK((x - x_true).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("anchor solver is exact on anchored products") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto inst = random_anchored(20, 4, 8, 10.0, seed);
    auto res = lls::spa_anchor_nmf(lls::StochasticMatrix(inst.v), 4);
    CHECK(res.residual < 1e-10);
    CHECK(best_perm_error(res.h.mat(), inst.h) < 1e-8);
    CHECK(best_perm_error(res.w.mat().transpose(), inst.w.transpose()) < 1e-8);
  }
}

TEST_CASE("row permutation of the input does not change recovered marginals") {
  auto inst = random_anchored(10, 3, 6, 10.0, 15, 2, true);
  Matrix pv(inst.v.rows(), inst.v.cols());
  std::vector<int> rowperm = {7, 2, 9, 0, 4, 8, 1, 6, 3, 5};
  for (int i = 0; i < 10; ++i) pv.row(rowperm[static_cast<size_t>(i)]) = inst.v.row(i);

  auto spa_a = lls::spa_anchor_nmf(lls::StochasticMatrix(inst.v), 3);
  auto spa_b = lls::spa_anchor_nmf(lls::StochasticMatrix(pv), 3);
  CHECK(best_perm_error(spa_b.h.mat(), spa_a.h.mat()) < 1e-10);

  lls::NmfOptions opts;
  opts.seed = 6;
  opts.max_iter = 400000;
  opts.screen_iter = 4000;
  opts.tol = 3e-5;
  auto mu_a = lls::nmf(lls::StochasticMatrix(inst.v), 3, opts);
  auto mu_b = lls::nmf(lls::StochasticMatrix(pv), 3, opts);
  CHECK(best_perm_error(mu_a.h.mat(), inst.h) < 1e-2);
  CHECK(best_perm_error(mu_b.h.mat(), inst.h) < 1e-2);
}

TEST_CASE("anchor solver on the identity") {
  auto res = lls::spa_anchor_nmf(lls::StochasticMatrix(Matrix::Identity(3, 3)), 3);
  CHECK(best_perm_error(res.h.mat(), Matrix::Identity(3, 3)) < 1e-12);
  CHECK(res.residual < 1e-12);
}

TEST_CASE("anchor solver reports rank deficiency") {
  // Rank-one matrix asked for two anchors: the second projection step has
  // nothing left to pick.
  Vector col(4);
  col << 0.4, 0.3, 0.2, 0.1;
  Matrix v(4, 3);
  for (int j = 0; j < 3; ++j) v.col(j) = col;
  CHECK_LLS_THROWS(anchor_deficient, lls::spa_anchor_nmf(lls::StochasticMatrix(v), 2));
}

TEST_CASE("both solvers recover scattered anchored marginals") {
  auto inst = random_anchored(12, 3, 6, 10.0, 77, 3, true);
  lls::StochasticMatrix v(inst.v);
  auto spa = lls::spa_anchor_nmf(v, 3);
  CHECK(best_perm_error(spa.h.mat(), inst.h) < 1e-8);
  lls::NmfOptions opts;
  opts.seed = 4;
  opts.max_iter = 400000;
  opts.screen_iter = 4000;
  opts.tol = 3e-5;
  auto mu = lls::nmf(v, 3, opts);
  CHECK(best_perm_error(mu.h.mat(), inst.h) < 1e-2);
}
