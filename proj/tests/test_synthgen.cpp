#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <map>
#include <set>

#include "lls/rng.hpp"
#include "lls/synthgen.hpp"
#include "test_util.hpp"

using lls::Matrix;
using lls::Vector;

namespace {

lls::ProblemParams small_params() {
  lls::ProblemParams p;
  p.k = 2;
  p.r = 3;
  p.alpha = 2.0;
  p.kappa_max = 20.0;
  p.epsilon = 0.1;
  p.m = 2;
  p.seed = 42;
  return p;
}

}  // namespace

TEST_CASE("largest-remainder quotas") {
  Vector d(2);
  d << 0.25, 0.75;
  auto counts = lls::quota_counts(lls::SimplexVec(d), 100);
  CHECK(counts[0] == 25);
  CHECK(counts[1] == 75);

  Vector onehot(3);
  onehot << 1.0, 0.0, 0.0;
  counts = lls::quota_counts(lls::SimplexVec(onehot), 17);
  CHECK(counts[0] == 17);
  CHECK(counts[1] == 0);

  // Counts always sum to n, whatever the rounding pattern.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    Vector w(5);
    for (int i = 0; i < 5; ++i) w(i) = u(rng);
    auto c = lls::quota_counts(lls::SimplexVec::proportional(w), 97);
    int total = 0;
    for (int x : c) total += x;
    CHECK(total == 97);
  }

  // Equal remainders break toward the lowest index.
  Vector half(2);
  half << 0.5, 0.5;
  counts = lls::quota_counts(lls::SimplexVec(half), 3);
  CHECK(counts[0] == 2);
  CHECK(counts[1] == 1);
}

TEST_CASE("label marginal sampling respects the acceptance predicate") {
  auto params = small_params();
  auto rng = lls::make_rng(params.seed);
  auto res = lls::sample_label_marginals(params, rng);
  CHECK(res.q_yd.rows() == 2);
  CHECK(res.q_yd.cols() == 3);
  CHECK(res.cond <= params.kappa_max);
  for (int d = 0; d < 3; ++d)
    CHECK(res.q_yd.mat().col(d).sum() == doctest::Approx(1.0).epsilon(1e-12));

  // Same seed, same matrix.
  auto rng2 = lls::make_rng(params.seed);
  auto res2 = lls::sample_label_marginals(params, rng2);
  CHECK((res.q_yd.mat() - res2.q_yd.mat()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(res.attempts == res2.attempts);
}

TEST_CASE("high concentration pushes columns toward uniform") {
  lls::ProblemParams params;
  params.k = 3;
  params.r = 5;
  params.alpha = 1000.0;
  params.kappa_max = 1e6;
  params.seed = 9;
  auto rng = lls::make_rng(params.seed);
  Matrix mean = Matrix::Zero(3, 5);
  const int draws = 1000;
  for (int i = 0; i < draws; ++i)
    mean += lls::sample_label_marginals(params, rng).q_yd.mat();
  mean /= draws;
  CHECK((mean.array() - 1.0 / 3.0).abs().maxCoeff() < 0.02);
}

TEST_CASE("condition bound of one admits only permutation-like marginals") {
  Matrix eye = Matrix::Identity(2, 2);
  CHECK(lls::marginals_acceptable(eye, 1.0 + 1e-12));

  Matrix mixed(2, 2);
  mixed << 0.6, 0.4, 0.4, 0.6;  // singular values 1 and 0.2
  CHECK_FALSE(lls::marginals_acceptable(mixed, 1.0 + 1e-12));
  CHECK(lls::marginals_acceptable(mixed, 5.0 + 1e-9));

  // Continuous draws almost surely miss the permutation set, so the sampler
  // must exhaust its budget and report the best condition number it saw.
  lls::ProblemParams params;
  params.k = 2;
  params.r = 2;
  params.alpha = 1.0;
  params.kappa_max = 1.0;
  params.seed = 4;
  auto rng = lls::make_rng(params.seed);
  CHECK_LLS_THROWS(generation_budget_exceeded,
                   lls::sample_label_marginals(params, rng, 0.0, 200));
}

TEST_CASE("class prior floor is enforced") {
  auto params = small_params();
  params.alpha = 6.0;
  auto rng = lls::make_rng(11);
  auto res = lls::sample_label_marginals(params, rng, 0.35);
  CHECK(lls::class_priors(res.q_yd).minCoeff() >= 0.35);

  auto rng2 = lls::make_rng(11);
  CHECK_LLS_THROWS(generation_budget_exceeded,
                   lls::sample_label_marginals(params, rng2, 0.6));  // 2 * 0.6 > 1
}

TEST_CASE("pair-support marginals") {
  lls::ProblemParams params;
  params.k = 4;
  params.r = 8;
  params.kappa_max = 10.0;
  params.m = 4;
  auto rng = lls::make_rng(3);
  auto res = lls::sample_pair_support_marginals(params, rng);
  const lls::Matrix& q = res.q_yd.mat();
  for (int d = 0; d < 8; ++d) {
    int nonzero = 0;
    for (int y = 0; y < 4; ++y) nonzero += q(y, d) > 0.0 ? 1 : 0;
    CHECK(nonzero == 2);
    CHECK(q.col(d).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(q.rowwise().sum().minCoeff() > 0.0);  // every class appears somewhere
  CHECK(res.cond <= 10.0);

  auto rng2 = lls::make_rng(3);
  auto res2 = lls::sample_pair_support_marginals(params, rng2);
  CHECK((q - res2.q_yd.mat()).cwiseAbs().maxCoeff() == 0.0);

  params.kappa_max = 1.0;  // repeated pairs always correlate some columns
  auto rng3 = lls::make_rng(3);
  CHECK_LLS_THROWS(generation_budget_exceeded,
                   lls::sample_pair_support_marginals(params, rng3, 50));

  params.kappa_max = 10.0;
  params.k = 1;
  params.r = 4;
  auto rng4 = lls::make_rng(3);
  CHECK_LLS_THROWS(invalid_input, lls::sample_pair_support_marginals(params, rng4));
}

TEST_CASE("block mixture layout") {
  auto params = small_params();
  params.epsilon = 0.4;
  auto rng = lls::make_rng(1);
  auto spec = lls::make_block_mixture(params, 1, 0.5, rng);
  REQUIRE(spec.classes.size() == 2);

  // Anchors occupy the slots {[0,1], [2,3]} in some order; the shared block
  // sits at [4,5] for both classes.
  std::set<double> anchor_lo;
  for (int y = 0; y < 2; ++y) {
    const auto& c = spec.classes[y];
    REQUIRE(c.blocks.size() == 2);
    CHECK(c.blocks[c.anchor_block].weight == 0.5);
    CHECK(c.blocks[1].weight == 0.5);
    CHECK(c.blocks[1].lo(0) == 4.0);
    CHECK(c.blocks[1].hi(0) == 5.0);
    anchor_lo.insert(c.blocks[c.anchor_block].lo(0));
  }
  CHECK(anchor_lo == std::set<double>{0.0, 2.0});

  // Densities: anchor region is exclusive, shared region is common.
  for (int y = 0; y < 2; ++y) {
    Vector inside(1);
    inside << spec.classes[y].blocks[0].lo(0) + 0.5;
    CHECK(spec.density(inside, y) == 0.5);
    CHECK(spec.density(inside, 1 - y) == 0.0);
    CHECK(spec.in_anchor(inside, y));
  }
  Vector shared(1);
  shared << 4.5;
  CHECK(spec.density(shared, 0) == 0.5);
  CHECK(spec.density(shared, 1) == 0.5);
  Vector gap(1);
  gap << 1.5;
  CHECK(spec.density(gap, 0) == 0.0);
  CHECK(spec.density(gap, 1) == 0.0);
}

TEST_CASE("block mixture rejects infeasible parameters") {
  auto params = small_params();
  auto rng = lls::make_rng(1);
  CHECK_LLS_THROWS(invalid_input, lls::make_block_mixture(params, 0, 0.0, rng));
  params.epsilon = 0.8;
  CHECK_LLS_THROWS(invalid_input, lls::make_block_mixture(params, 1, 0.5, rng));
}

TEST_CASE("dataset sampling follows quotas and stays on support") {
  auto params = small_params();
  params.seed = 5;
  auto rng = lls::make_rng(params.seed);
  auto marg = lls::sample_label_marginals(params, rng);
  auto spec = lls::make_block_mixture(params, 2, 0.25, rng);
  lls::SplitFractions splits;
  auto data = lls::sample_dataset(marg.q_yd, spec, 200, splits, rng);

  CHECK(data.records.size() == 200 * 3);

  // Independent tally against the quota oracle.
  std::map<std::tuple<int, int, int>, int> tally;  // (split, domain, label)
  for (const auto& rec : data.records) {
    tally[{static_cast<int>(rec.split), rec.domain, rec.label}] += 1;
    CHECK(spec.density(rec.x, rec.label) > 0.0);
  }
  Vector frac(3);
  frac << splits.train, splits.valid, splits.test;
  auto split_sizes = lls::quota_counts(lls::SimplexVec(frac), 200);
  for (int s = 0; s < 3; ++s)
    for (int d = 0; d < 3; ++d) {
      auto counts = lls::quota_counts(marg.q_yd.col(d), split_sizes[s]);
      for (int y = 0; y < 2; ++y) CHECK(tally[{s, d, y}] == counts[y]);
    }

  // Anchor occupancy concentrates at 1 - overlap (binomial, 3 sigma).
  int anchored = 0, total = 0;
  for (const auto& rec : data.records) {
    total += 1;
    anchored += spec.in_anchor(rec.x, rec.label) ? 1 : 0;
  }
  const double phat = static_cast<double>(anchored) / total;
  CHECK(std::abs(phat - 0.75) < 3.0 * std::sqrt(0.75 * 0.25 / total));
}

TEST_CASE("dataset sampling is reproducible") {
  lls::BlockInstanceConfig cfg;
  cfg.params = small_params();
  cfg.params.epsilon = 0.15;
  cfg.params.alpha = 4.0;
  cfg.p = 2;
  cfg.overlap_fraction = 0.25;
  cfg.n_per_domain = 120;
  auto a = lls::make_block_instance(cfg);
  auto b = lls::make_block_instance(cfg);
  REQUIRE(a.data.records.size() == b.data.records.size());
  for (size_t i = 0; i < a.data.records.size(); ++i) {
    CHECK((a.data.records[i].x - b.data.records[i].x).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.data.records[i].domain == b.data.records[i].domain);
    CHECK(a.data.records[i].label == b.data.records[i].label);
  }
  CHECK((a.q_yd.mat() - b.q_yd.mat()).cwiseAbs().maxCoeff() == 0.0);

  // The prior floor implied by epsilon and overlap holds.
  const double floor = cfg.params.epsilon / (1.0 - cfg.overlap_fraction) * 1.05;
  CHECK(lls::class_priors(a.q_yd).minCoeff() >= floor);
}

TEST_CASE("unlabeled views strip labels and keep alignment") {
  lls::BlockInstanceConfig cfg;
  cfg.params = small_params();
  cfg.n_per_domain = 60;
  auto inst = lls::make_block_instance(cfg);
  auto view = lls::unlabeled_view(inst.data, {lls::Split::train, lls::Split::valid});
  CHECK(view.x.rows() == static_cast<Eigen::Index>(view.domains.size()));
  for (size_t i = 0; i < view.record_index.size(); ++i) {
    const auto& rec = inst.data.records[view.record_index[i]];
    CHECK(rec.split != lls::Split::test);
    CHECK(rec.domain == view.domains[i]);
    CHECK((rec.x.transpose() - view.x.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff() ==
          0.0);
  }
  auto labels = lls::labels_of(inst.data, view.record_index);
  CHECK(labels.size() == view.record_index.size());
}

TEST_CASE("anchored word distributions") {
  auto rng = lls::make_rng(17);
  auto q_xy = lls::sample_anchored_word_distribution(12, 3, 2, rng);
  CHECK(q_xy.rows() == 12);
  CHECK(q_xy.cols() == 3);
  int anchors_seen = 0;
  for (int x = 0; x < 12; ++x) {
    int positive = 0;
    for (int y = 0; y < 3; ++y) positive += q_xy(x, y) > 0.0 ? 1 : 0;
    if (positive == 1) anchors_seen += 1;
  }
  CHECK(anchors_seen >= 6);  // two exclusive rows per class

  CHECK_LLS_THROWS(invalid_input, lls::sample_anchored_word_distribution(5, 3, 2, rng));
}

TEST_CASE("exact word-domain marginal is the product of the factors") {
  lls::DiscreteInstanceConfig cfg;
  cfg.params = small_params();
  cfg.params.k = 3;
  cfg.params.r = 4;
  cfg.params.alpha = 3.0;
  cfg.vocab = 10;
  auto inst = lls::make_discrete_instance(cfg);
  CHECK(inst.discrete());
  CHECK(inst.data.records.empty());
  auto q_xd = lls::exact_word_domain_matrix(inst);
  Matrix expected = inst.q_xy->mat() * inst.q_yd.mat();
  CHECK((q_xd.mat() - expected).cwiseAbs().maxCoeff() < 1e-12);
  for (int d = 0; d < 4; ++d)
    CHECK(q_xd.mat().col(d).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("oracle discriminator matches hand-computed posteriors") {
  lls::BlockInstanceConfig cfg;
  cfg.params = small_params();
  cfg.params.seed = 21;
  cfg.overlap_fraction = 0.4;
  cfg.params.epsilon = 0.1;
  cfg.n_per_domain = 50;
  auto inst = lls::make_block_instance(cfg);
  lls::OracleDiscriminator oracle(inst);

  // Anchor point of class y: f is row y of q_yd normalized, g is one-hot.
  for (int y = 0; y < 2; ++y) {
    const auto& anchor = inst.spec->classes[y].blocks[inst.spec->classes[y].anchor_block];
    Vector x = (anchor.lo + anchor.hi) / 2.0;
    Vector row = inst.q_yd.mat().row(y).transpose();
    Vector expected = row / row.sum();
    auto f = oracle.domain_posterior(x);
    CHECK((f.vec() - expected).cwiseAbs().maxCoeff() < 1e-12);
    auto g = oracle.class_posterior(x);
    CHECK(g[y] == 1.0);
    CHECK(g[1 - y] == 0.0);
  }

  // Shared point: g equals the normalized priors and f = Q_{D|Y} g.
  Vector shared(2);
  shared << 2.0 * inst.params.k + 0.5, 0.5;
  auto g = oracle.class_posterior(shared);
  Vector priors = lls::class_priors(inst.q_yd);
  CHECK((g.vec() - priors / priors.sum()).cwiseAbs().maxCoeff() < 1e-12);
  auto q_dy = lls::column_normalize(inst.q_yd.mat().transpose()).matrix;
  auto f = oracle.domain_posterior(shared);
  CHECK((f.vec() - q_dy.mat() * g.vec()).cwiseAbs().maxCoeff() < 1e-12);

  // Off-support point.
  Vector gap(2);
  gap << 1.5, 0.5;
  CHECK_LLS_THROWS(out_of_support, oracle.domain_posterior(gap));
}

TEST_CASE("oracle posteriors are literally constant on anchor sets") {
  lls::BlockInstanceConfig cfg;
  cfg.params = small_params();
  cfg.params.seed = 33;
  cfg.overlap_fraction = 0.3;
  cfg.n_per_domain = 300;
  auto inst = lls::make_block_instance(cfg);
  lls::OracleDiscriminator oracle(inst);

  // All anchor points of a class produce bitwise-identical f; anchor points of
  // different classes differ.
  std::map<int, Vector> rep;
  for (const auto& rec : inst.data.records) {
    if (!inst.spec->in_anchor(rec.x, rec.label)) continue;
    Vector f = oracle.domain_posterior(rec.x).vec();
    auto [it, fresh] = rep.try_emplace(rec.label, f);
    if (!fresh) CHECK((f - it->second).cwiseAbs().maxCoeff() == 0.0);
  }
  REQUIRE(rep.size() == 2);
  CHECK((rep[0] - rep[1]).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("discrete oracle posterior") {
  lls::DiscreteInstanceConfig cfg;
  cfg.params = small_params();
  cfg.vocab = 8;
  cfg.n_per_domain = 40;
  auto inst = lls::make_discrete_instance(cfg);
  lls::OracleDiscriminator oracle(inst);
  Vector x(1);
  x << 3.0;
  auto f = oracle.domain_posterior(x);
  // Independent route: q(d | x) proportional to sum_y q_yd[y, d] q_xy[x, y].
  Vector w = inst.q_yd.mat().transpose() * inst.q_xy->mat().row(3).transpose();
  CHECK((f.vec() - w / w.sum()).cwiseAbs().maxCoeff() < 1e-14);

  Vector bad(1);
  bad << 99.0;
  CHECK_LLS_THROWS(out_of_support, oracle.domain_posterior(bad));
}
