#include "lls/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lls/rng.hpp"

namespace lls {

namespace {

void validate_splits(const SplitFractions& s) {
  if (s.train < 0.0 || s.valid < 0.0 || s.test < 0.0 ||
      std::abs(s.train + s.valid + s.test - 1.0) > 1e-9)
    fail(errc::invalid_input, "split fractions must be non-negative and sum to 1");
}

// One Dirichlet draw, shape alpha on every coordinate.
Vector dirichlet(int dim, double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = gamma(rng);
  const double s = v.sum();
  if (s <= 1e-300) return Vector::Zero(dim);  // underflow; caller rejects
  return v / s;
}

int pick_categorical(const Vector& weights, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double target = u(rng) * weights.sum();
  double acc = 0.0;
  for (int i = 0; i < weights.size(); ++i) {
    acc += weights(i);
    if (target < acc) return i;
  }
  return static_cast<int>(weights.size()) - 1;
}

Vector draw_from_block(const Block& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x(b.lo.size());
  for (int i = 0; i < x.size(); ++i) x(i) = b.lo(i) + u(rng) * (b.hi(i) - b.lo(i));
  return x;
}

Vector draw_from_class(const MixtureSpec& spec, int y, std::mt19937_64& rng) {
  const auto& blocks = spec.classes[y].blocks;
  Vector w(blocks.size());
  for (size_t b = 0; b < blocks.size(); ++b) w(static_cast<int>(b)) = blocks[b].weight;
  return draw_from_block(blocks[pick_categorical(w, rng)], rng);
}

constexpr Split kSplits[] = {Split::train, Split::valid, Split::test};

}  // namespace

double Block::volume() const {
  double v = 1.0;
  for (int i = 0; i < lo.size(); ++i) v *= hi(i) - lo(i);
  return v;
}

bool Block::contains(const Vector& x) const {
  if (x.size() != lo.size()) fail(errc::shape_mismatch, "point dimension differs from block");
  for (int i = 0; i < lo.size(); ++i)
    if (x(i) < lo(i) || x(i) > hi(i)) return false;
  return true;
}

double MixtureSpec::density(const Vector& x, int y) const {
  if (y < 0 || y >= k) fail(errc::invalid_input, "class index out of range");
  double d = 0.0;
  for (const auto& b : classes[y].blocks)
    if (b.contains(x)) d += b.weight / b.volume();
  return d;
}

bool MixtureSpec::in_anchor(const Vector& x, int y) const {
  const auto& c = classes[y];
  return c.blocks[c.anchor_block].contains(x);
}

UnlabeledView unlabeled_view(const DomainDataset& data, std::initializer_list<Split> splits) {
  std::vector<int> idx;
  for (size_t i = 0; i < data.records.size(); ++i)
    for (Split s : splits)
      if (data.records[i].split == s) {
        idx.push_back(static_cast<int>(i));
        break;
      }
  UnlabeledView v;
  v.r = data.r;
  v.p = data.p;
  v.x.resize(static_cast<Eigen::Index>(idx.size()), data.p);
  v.domains.resize(idx.size());
  v.record_index = std::move(idx);
  for (size_t row = 0; row < v.record_index.size(); ++row) {
    const auto& rec = data.records[v.record_index[row]];
    v.x.row(static_cast<Eigen::Index>(row)) = rec.x.transpose();
    v.domains[row] = rec.domain;
  }
  return v;
}

std::vector<int> labels_of(const DomainDataset& data, const std::vector<int>& record_index) {
  std::vector<int> labels(record_index.size());
  for (size_t i = 0; i < record_index.size(); ++i)
    labels[i] = data.records[record_index[i]].label;
  return labels;
}

std::vector<int> quota_counts(const SimplexVec& dist, int n) {
  if (n < 0) fail(errc::invalid_input, "quota size must be non-negative");
  const int k = dist.dim();
  std::vector<int> counts(k);
  std::vector<std::pair<double, int>> rem(k);
  int assigned = 0;
  for (int i = 0; i < k; ++i) {
    const double exact = dist[i] * n;
    counts[i] = static_cast<int>(std::floor(exact));
    rem[i] = {exact - counts[i], i};
    assigned += counts[i];
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int j = 0; j < n - assigned; ++j) counts[rem[j].second] += 1;
  return counts;
}

Vector class_priors(const StochasticMatrix& q_yd) {
  return q_yd.mat().rowwise().mean();
}

bool marginals_acceptable(const Matrix& q_yd, double kappa_max, double min_class_prior) {
  const double cond = condition_number_2norm(q_yd);
  if (!(cond <= kappa_max)) return false;
  if (min_class_prior > 0.0 && q_yd.rowwise().mean().minCoeff() < min_class_prior) return false;
  return true;
}

MarginalsResult sample_label_marginals(const ProblemParams& params, std::mt19937_64& rng,
                                       double min_class_prior, int budget) {
  params.validate(false);
  if (min_class_prior * params.k > 1.0)
    fail(errc::generation_budget_exceeded,
         "class-prior floor " + std::to_string(min_class_prior) + " is infeasible for k=" +
             std::to_string(params.k));
  double best_cond = std::numeric_limits<double>::infinity();
  for (int attempt = 1; attempt <= budget; ++attempt) {
    Matrix q(params.k, params.r);
    bool degenerate = false;
    for (int d = 0; d < params.r; ++d) {
      Vector col = dirichlet(params.k, params.alpha / params.k, rng);
      if (col.sum() <= 0.0) {
        degenerate = true;
        break;
      }
      q.col(d) = col;
    }
    if (degenerate) continue;
    const double cond = condition_number_2norm(q);
    best_cond = std::min(best_cond, cond);
    if (marginals_acceptable(q, params.kappa_max, min_class_prior))
      return {StochasticMatrix(q), attempt, cond};
  }
  fail(errc::generation_budget_exceeded,
       "no acceptable label marginals in " + std::to_string(budget) +
           " attempts; best condition number " + std::to_string(best_cond));
}

MarginalsResult sample_pair_support_marginals(const ProblemParams& params,
                                              std::mt19937_64& rng, int budget) {
  params.validate(false);
  if (params.k < 2) fail(errc::invalid_input, "pair supports need k >= 2");
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < params.k; ++a)
    for (int b = a + 1; b < params.k; ++b) pairs.emplace_back(a, b);

  std::gamma_distribution<double> gamma(2.0, 1.0);
  double best_cond = std::numeric_limits<double>::infinity();
  for (int attempt = 1; attempt <= budget; ++attempt) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    Matrix q = Matrix::Zero(params.k, params.r);
    for (int d = 0; d < params.r; ++d) {
      const auto& [a, b] = pairs[static_cast<size_t>(d) % pairs.size()];
      const double wa = gamma(rng);
      const double wb = gamma(rng);
      if (wa + wb <= 0.0) {
        q(a, d) = 1.0;
        continue;
      }
      q(a, d) = wa / (wa + wb);
      q(b, d) = wb / (wa + wb);
    }
    if (q.rowwise().sum().minCoeff() <= 0.0) continue;  // some class never appears
    const double cond = condition_number_2norm(q);
    best_cond = std::min(best_cond, cond);
    if (marginals_acceptable(q, params.kappa_max))
      return {StochasticMatrix(q), attempt, cond};
  }
  fail(errc::generation_budget_exceeded,
       "no acceptable pair-support marginals in " + std::to_string(budget) +
           " attempts; best condition number " + std::to_string(best_cond));
}

MixtureSpec make_block_mixture(const ProblemParams& params, int p, double overlap_fraction,
                               std::mt19937_64& rng) {
  params.validate(false);
  if (p < 1) fail(errc::invalid_input, "feature dimension must be >= 1");
  if (overlap_fraction < 0.0 || overlap_fraction >= 1.0)
    fail(errc::invalid_input, "overlap_fraction must be in [0, 1)");
  if (1.0 - overlap_fraction < params.epsilon)
    fail(errc::invalid_input, "anchor weight 1 - overlap_fraction must be >= epsilon");

  auto box = [&](int slot) {
    Block b;
    b.lo = Vector::Zero(p);
    b.hi = Vector::Ones(p);
    b.lo(0) = 2.0 * slot;
    b.hi(0) = 2.0 * slot + 1.0;
    return b;
  };

  std::vector<int> slots(params.k);
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);

  MixtureSpec spec;
  spec.k = params.k;
  spec.p = p;
  spec.overlap_fraction = overlap_fraction;
  spec.classes.resize(params.k);
  for (int y = 0; y < params.k; ++y) {
    Block anchor = box(slots[y]);
    anchor.weight = 1.0 - overlap_fraction;
    spec.classes[y].blocks.push_back(anchor);
    spec.classes[y].anchor_block = 0;
    if (overlap_fraction > 0.0) {
      Block shared = box(params.k);
      shared.weight = overlap_fraction;
      spec.classes[y].blocks.push_back(shared);
    }
  }
  return spec;
}

namespace {

template <typename DrawPoint>
DomainDataset sample_dataset_impl(const StochasticMatrix& q_yd, int p, int n_per_domain,
                                  const SplitFractions& splits, std::mt19937_64& rng,
                                  DrawPoint&& draw_point) {
  validate_splits(splits);
  if (n_per_domain < 1) fail(errc::invalid_input, "n_per_domain must be >= 1");
  const int k = q_yd.rows();
  const int r = q_yd.cols();

  Vector frac(3);
  frac << splits.train, splits.valid, splits.test;
  const std::vector<int> split_sizes = quota_counts(SimplexVec(frac), n_per_domain);

  DomainDataset data;
  data.k = k;
  data.r = r;
  data.p = p;
  data.records.reserve(static_cast<size_t>(n_per_domain) * r);
  for (int s = 0; s < 3; ++s) {
    for (int d = 0; d < r; ++d) {
      const std::vector<int> counts = quota_counts(q_yd.col(d), split_sizes[s]);
      for (int y = 0; y < k; ++y) {
        for (int i = 0; i < counts[y]; ++i) {
          DataRecord rec;
          rec.x = draw_point(y);
          rec.domain = d;
          rec.label = y;
          rec.split = kSplits[s];
          data.records.push_back(std::move(rec));
        }
      }
    }
  }
  return data;
}

}  // namespace

DomainDataset sample_dataset(const StochasticMatrix& q_yd, const MixtureSpec& spec,
                             int n_per_domain, const SplitFractions& splits,
                             std::mt19937_64& rng) {
  if (spec.k != q_yd.rows()) fail(errc::shape_mismatch, "mixture classes differ from marginals");
  return sample_dataset_impl(q_yd, spec.p, n_per_domain, splits, rng,
                             [&](int y) { return draw_from_class(spec, y, rng); });
}

StochasticMatrix sample_anchored_word_distribution(int vocab, int k, int anchors_per_class,
                                                   std::mt19937_64& rng) {
  if (k < 1 || anchors_per_class < 1) fail(errc::invalid_input, "need k >= 1 anchors >= 1");
  if (vocab < k * anchors_per_class)
    fail(errc::invalid_input, "vocab too small for requested anchors");

  std::vector<int> rows(vocab);
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);

  // owner[x] = class owning row x as an anchor, or -1 for shared rows.
  std::vector<int> owner(vocab, -1);
  int next = 0;
  for (int y = 0; y < k; ++y)
    for (int a = 0; a < anchors_per_class; ++a) owner[rows[next++]] = y;

  Matrix q = Matrix::Zero(vocab, k);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  for (int y = 0; y < k; ++y) {
    double s = 0.0;
    for (int x = 0; x < vocab; ++x) {
      if (owner[x] == -1 || owner[x] == y) {
        q(x, y) = gamma(rng);
        s += q(x, y);
      }
    }
    q.col(y) /= s;
  }
  return StochasticMatrix::proportional_columns(q);
}

DomainDataset sample_discrete_dataset(const StochasticMatrix& q_yd,
                                      const StochasticMatrix& q_xy, int n_per_domain,
                                      const SplitFractions& splits, std::mt19937_64& rng) {
  if (q_xy.cols() != q_yd.rows()) fail(errc::shape_mismatch, "word-class columns differ from k");
  return sample_dataset_impl(q_yd, 1, n_per_domain, splits, rng, [&](int y) {
    Vector x(1);
    x(0) = pick_categorical(q_xy.mat().col(y), rng);
    return x;
  });
}

ProblemInstance make_block_instance(const BlockInstanceConfig& cfg) {
  cfg.params.validate(false);
  auto rng = make_rng(cfg.params.seed);
  // A.4 coupling: anchor mass is q(y) * (1 - overlap); 5% headroom covers the
  // integral rounding of finite quota samples.
  const double floor = cfg.params.epsilon / (1.0 - cfg.overlap_fraction) * 1.05;
  MarginalsResult marg = sample_label_marginals(cfg.params, rng, floor);
  MixtureSpec spec = make_block_mixture(cfg.params, cfg.p, cfg.overlap_fraction, rng);
  DomainDataset data =
      sample_dataset(marg.q_yd, spec, cfg.n_per_domain, cfg.splits, rng);
  return {cfg.params, std::move(marg.q_yd), std::move(spec), std::nullopt, std::move(data)};
}

ProblemInstance make_discrete_instance(const DiscreteInstanceConfig& cfg) {
  cfg.params.validate(false);
  auto rng = make_rng(cfg.params.seed);
  MarginalsResult marg = sample_label_marginals(cfg.params, rng);
  StochasticMatrix q_xy =
      sample_anchored_word_distribution(cfg.vocab, cfg.params.k, cfg.anchors_per_class, rng);
  DomainDataset data;
  if (cfg.n_per_domain > 0)
    data = sample_discrete_dataset(marg.q_yd, q_xy, cfg.n_per_domain, cfg.splits, rng);
  else {
    data.k = cfg.params.k;
    data.r = cfg.params.r;
    data.p = 1;
  }
  return {cfg.params, std::move(marg.q_yd), std::nullopt, std::move(q_xy), std::move(data)};
}

StochasticMatrix exact_word_domain_matrix(const ProblemInstance& instance) {
  if (!instance.discrete()) fail(errc::invalid_input, "instance has no word-class matrix");
  return StochasticMatrix::proportional_columns(instance.q_xy->mat() * instance.q_yd.mat());
}

OracleDiscriminator::OracleDiscriminator(const ProblemInstance& instance)
    : k_(instance.q_yd.rows()),
      r_(instance.q_yd.cols()),
      q_yd_(instance.q_yd.mat()),
      q_y_(class_priors(instance.q_yd)) {
  if (instance.spec)
    spec_ = *instance.spec;
  else if (instance.q_xy)
    q_xy_ = instance.q_xy->mat();
  else
    fail(errc::invalid_input, "oracle needs instance densities");
}

Vector OracleDiscriminator::class_densities(const Vector& x) const {
  Vector dens(k_);
  if (spec_) {
    for (int y = 0; y < k_; ++y) dens(y) = spec_->density(x, y);
    return dens;
  }
  if (x.size() != 1) fail(errc::shape_mismatch, "discrete oracle expects a word index");
  const double raw = x(0);
  const int word = static_cast<int>(std::lround(raw));
  if (std::abs(raw - word) > 1e-9 || word < 0 || word >= q_xy_->rows())
    fail(errc::out_of_support, "word index " + std::to_string(raw) + " outside vocabulary");
  for (int y = 0; y < k_; ++y) dens(y) = (*q_xy_)(word, y);
  return dens;
}

SimplexVec OracleDiscriminator::domain_posterior(const Vector& x) const {
  const Vector dens = class_densities(x);
  // Equal domain representation: q(d | x) is proportional to sum_y q_yd[y, d] q(x | y).
  Vector w = q_yd_.transpose() * dens;
  if (w.sum() <= 0.0) fail(errc::out_of_support, "point has zero density under every class");
  return SimplexVec::proportional(std::move(w));
}

SimplexVec OracleDiscriminator::class_posterior(const Vector& x) const {
  const Vector dens = class_densities(x);
  Vector w = q_y_.cwiseProduct(dens);
  if (w.sum() <= 0.0) fail(errc::out_of_support, "point has zero density under every class");
  return SimplexVec::proportional(std::move(w));
}

Matrix OracleDiscriminator::domain_posterior_rows(const Matrix& x) const {
  Matrix out(x.rows(), r_);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out.row(i) = domain_posterior(x.row(i).transpose()).vec().transpose();
  return out;
}

}  // namespace lls
