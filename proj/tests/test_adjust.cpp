#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "lls/adjust.hpp"
#include "lls/discretize.hpp"
#include "lls/rng.hpp"
#include "lls/synthgen.hpp"
#include "test_util.hpp"

using lls::Matrix;
using lls::Vector;

namespace {

lls::StochasticMatrix hand_q_yd() {
  Matrix q(2, 2);
  q << 0.17, 0.65,
       0.83, 0.35;
  return lls::StochasticMatrix(q);
}

}  // namespace

TEST_CASE("domain-given-class normalizes the transposed rows") {
  auto id = lls::q_d_given_y(lls::StochasticMatrix(Matrix::Identity(3, 3)));
  CHECK((id.mat() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);

  auto q_dy = lls::q_d_given_y(hand_q_yd());
  CHECK(q_dy(0, 0) == doctest::Approx(0.2073).epsilon(1e-3));
  CHECK(q_dy(0, 1) == doctest::Approx(0.7034).epsilon(1e-3));
  CHECK(q_dy(1, 0) == doctest::Approx(0.7927).epsilon(1e-3));
  CHECK(q_dy(1, 1) == doctest::Approx(0.2966).epsilon(1e-3));
  // Exact values: rows of q_yd divided by row sums 0.82 and 1.18.
  CHECK(q_dy(0, 0) == 0.17 / 0.82);
  CHECK(q_dy(1, 1) == 0.35 / 1.18);
}

TEST_CASE("a class absent everywhere is reported by row index") {
  Matrix q(2, 2);
  q << 1.0, 1.0,
       0.0, 0.0;
  try {
    lls::q_d_given_y(lls::StochasticMatrix(q));
    FAIL("expected ZeroRow");
  } catch (const lls::Error& e) {
    CHECK(e.code() == lls::errc::zero_row);
    CHECK(e.index() == 1);
  }
}

TEST_CASE("identity marginals let the domain determine the class") {
  Vector f(2);
  f << 0.3, 0.7;
  auto pred = lls::adjust_predict(lls::StochasticMatrix(Matrix::Identity(2, 2)), f, 0);
  CHECK(pred.q_y_given_x[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(pred.q_y_given_x[1] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(pred.q_y_given_x_d[0] == 1.0);
  CHECK(pred.q_y_given_x_d[1] == 0.0);
  CHECK(pred.y_pred == 0);
}

TEST_CASE("anchor inputs produce one-hot posteriors") {
  auto q_yd = hand_q_yd();
  auto q_dy = lls::q_d_given_y(q_yd);
  for (int y = 0; y < 2; ++y) {
    Vector f = q_dy.mat().col(y);
    for (int d = 0; d < 2; ++d) {
      auto pred = lls::adjust_predict(q_yd, f, d);
      CHECK(pred.q_y_given_x[y] == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(pred.q_y_given_x_d[y] == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(pred.y_pred == y);
    }
  }
}

TEST_CASE("degenerate marginals are rejected") {
  Matrix q(2, 2);
  q << 0.5, 0.5,
       0.5, 0.5;
  Vector f(2);
  f << 0.6, 0.4;
  CHECK_LLS_THROWS(rank_deficient, lls::adjust_predict(lls::StochasticMatrix(q), f, 0));

  Vector bad(3);
  bad << 0.2, 0.3, 0.5;
  CHECK_LLS_THROWS(shape_mismatch, lls::adjust_predict(hand_q_yd(), bad, 0));
  CHECK_LLS_THROWS(invalid_input, lls::adjust_predict(hand_q_yd(), f, 2));
}

TEST_CASE("zero adjusted mass raises an undefined posterior") {
  // Identity marginals: domain 0 carries only class 0, but the point surely
  // belongs to class 1, so conditioning on domain 0 leaves no mass at all.
  lls::StochasticMatrix q_yd(Matrix::Identity(2, 2));
  Vector f(2);
  f << 0.0, 1.0;
  CHECK_LLS_THROWS(undefined_posterior, lls::adjust_predict(q_yd, f, 0));
}

TEST_CASE("recovered posteriors match the analytic oracle on mixtures") {
  lls::BlockInstanceConfig cfg;
  cfg.params.k = 3;
  cfg.params.r = 5;
  cfg.params.alpha = 4.0;
  cfg.params.kappa_max = 20.0;
  cfg.params.epsilon = 0.05;
  cfg.params.seed = 31;
  cfg.p = 2;
  cfg.overlap_fraction = 0.3;
  cfg.n_per_domain = 300;
  auto inst = lls::make_block_instance(cfg);
  lls::OracleDiscriminator oracle(inst);

  const auto& q = inst.q_yd.mat();
  int checked = 0;
  for (size_t i = 0; i < inst.data.records.size() && checked < 1000; ++i) {
    const auto& rec = inst.data.records[i];
    Vector f = oracle.domain_posterior(rec.x).vec();
    Vector g_true = oracle.class_posterior(rec.x).vec();
    auto pred = lls::adjust_predict(inst.q_yd, f, rec.domain);

    // Recovering q(y|x) from the domain posterior inverts exactly.
    CHECK((pred.q_y_given_x.vec() - g_true).cwiseAbs().maxCoeff() < 1e-8);

    // Domain adjustment agrees with direct Bayes: q(y|x,d) prop q(x|y) q(y|d).
    Vector direct(3);
    for (int y = 0; y < 3; ++y) direct(y) = inst.spec->density(rec.x, y) * q(y, rec.domain);
    direct /= direct.sum();
    CHECK((pred.q_y_given_x_d.vec() - direct).cwiseAbs().maxCoeff() < 1e-8);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("permuting classes permutes the posteriors") {
  Matrix q(3, 4);
  q << 0.6, 0.1, 0.2, 0.3,
       0.3, 0.7, 0.3, 0.2,
       0.1, 0.2, 0.5, 0.5;
  lls::StochasticMatrix q_yd(q);
  Vector f(4);
  f << 0.4, 0.3, 0.2, 0.1;

  std::vector<int> perm = {2, 0, 1};  // class y moves to row perm[y]
  Matrix pq(3, 4);
  for (int y = 0; y < 3; ++y) pq.row(perm[static_cast<size_t>(y)]) = q.row(y);

  for (int d = 0; d < 4; ++d) {
    auto base = lls::adjust_predict(q_yd, f, d);
    auto moved = lls::adjust_predict(lls::StochasticMatrix(pq), f, d);
    for (int y = 0; y < 3; ++y) {
      const int py = perm[static_cast<size_t>(y)];
      CHECK(moved.q_y_given_x[py] == doctest::Approx(base.q_y_given_x[y]).epsilon(1e-12));
      CHECK(moved.q_y_given_x_d[py] ==
            doctest::Approx(base.q_y_given_x_d[y]).epsilon(1e-12));
    }
    CHECK(moved.y_pred == perm[static_cast<size_t>(base.y_pred)]);
  }
}

TEST_CASE("tiny perturbations of the domain posterior never flip the argmax") {
  Matrix q(3, 4);
  q << 0.6, 0.1, 0.2, 0.3,
       0.3, 0.7, 0.3, 0.2,
       0.1, 0.2, 0.5, 0.5;
  lls::StochasticMatrix q_yd(q);
  Vector f(4);
  f << 0.4, 0.3, 0.2, 0.1;
  auto base = lls::adjust_predict(q_yd, f, 1);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vector fp = f;
    for (int d = 0; d < 4; ++d) fp(d) += 1e-13 * u(rng);
    fp /= fp.sum();
    CHECK(lls::adjust_predict(q_yd, fp, 1).y_pred == base.y_pred);
  }
}

TEST_CASE("naive training composes tabularize and factorization") {
  std::vector<int> clusters = {0, 1, 2, 0, 1, 2, 0, 0, 1, 2, 2, 1};
  std::vector<int> domains  = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
  lls::NmfOptions opts;
  opts.seed = 3;
  auto model = lls::naive_train(clusters, domains, 3, 3, 2, opts);

  auto table = lls::tabularize(clusters, domains, 3, 3);
  auto factors = lls::nmf(table.q_cd, 2, opts);
  CHECK((model.w.mat() - factors.w.mat()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((model.h.mat() - factors.h.mat()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(model.residual == factors.residual);

  CHECK_LLS_THROWS(invalid_rank, lls::naive_train(clusters, domains, 3, 3, 4, opts));
}

TEST_CASE("naive posterior hand cases") {
  Matrix w2(2, 2);
  w2 << 0.2, 0.8,
        0.8, 0.2;
  Matrix h(2, 2);
  h << 0.5, 0.3,
       0.5, 0.7;
  lls::StochasticMatrix wq(w2), hq(h);

  // Hand case: w row (0.2, 0.8) against the uniform column (0.5, 0.5).
  auto pred = lls::naive_predict(wq, hq, 0, 0);
  CHECK(pred.q_y_given_x_d[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(pred.q_y_given_x_d[1] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(pred.y_pred == 1);

  // Anchor cluster: one-hot w row forces a one-hot posterior.
  Matrix w3(2, 2);
  w3 << 1.0, 0.0,
        0.0, 1.0;
  auto anchor = lls::naive_predict(lls::StochasticMatrix(w3), hq, 0, 1);
  CHECK(anchor.q_y_given_x_d[0] == 1.0);
  CHECK(anchor.y_pred == 0);

  // Uniform w row: the posterior is exactly column d' of h.
  Matrix w4(2, 2);
  w4 << 0.5, 0.5,
        0.5, 0.5;
  auto uniform = lls::naive_predict(lls::StochasticMatrix(w4), hq, 1, 1);
  CHECK(uniform.q_y_given_x_d[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(uniform.q_y_given_x_d[1] == doctest::Approx(0.7).epsilon(1e-12));

  // Domain-free field uses the uniform-domain prior (0.4, 0.6).
  CHECK(pred.q_y_given_x[0] == doctest::Approx(0.2 * 0.4 / (0.2 * 0.4 + 0.8 * 0.6)));
  CHECK(pred.q_y_given_x[1] == doctest::Approx(0.8 * 0.6 / (0.2 * 0.4 + 0.8 * 0.6)));

  // Zero mass at (cluster, domain) is undefined: cluster 0 is pure class 1,
  // domain 0 is pure class 0.
  Matrix w5(2, 2);
  w5 << 0.0, 1.0,
        1.0, 0.0;
  Matrix h5(2, 2);
  h5 << 1.0, 0.0,
        0.0, 1.0;
  CHECK_LLS_THROWS(undefined_posterior,
                   lls::naive_predict(lls::StochasticMatrix(w5), lls::StochasticMatrix(h5), 0, 0));
  CHECK_LLS_THROWS(invalid_input,
                   lls::naive_predict(wq, hq, 5, 0));
  CHECK_LLS_THROWS(invalid_input,
                   lls::naive_predict(wq, hq, 0, 5));
}
