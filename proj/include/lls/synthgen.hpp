#pragma once

#include <optional>
#include <random>
#include <vector>

#include "lls/core.hpp"

namespace lls {

// ---------------------------------------------------------------------------
// Synthetic problem instances: label marginals that shift across domains over
// a fixed set of class-conditional input distributions. Continuous instances
// use axis-aligned block mixtures (each class owns a disjoint anchor block and
// may share one common block); discrete instances use an anchored word-class
// matrix. Generation is single-threaded per instance: one RNG stream, consumed
// in a fixed order, so a seed pins every byte of the instance.
// ---------------------------------------------------------------------------

struct Block {
  Vector lo;
  Vector hi;
  double weight = 1.0;

  double volume() const;
  bool contains(const Vector& x) const;
};

struct ClassMixture {
  std::vector<Block> blocks;
  int anchor_block = 0;  // index into blocks; region owned exclusively by this class
};

struct MixtureSpec {
  int k = 0;
  int p = 0;
  double overlap_fraction = 0.0;
  std::vector<ClassMixture> classes;

  // Density of q(x | y). Zero outside the class support.
  double density(const Vector& x, int y) const;
  bool in_anchor(const Vector& x, int y) const;
};

enum class Split { train = 0, valid = 1, test = 2 };

constexpr int kHiddenLabel = -1;

struct DataRecord {
  Vector x;
  int domain = 0;
  int label = kHiddenLabel;
  Split split = Split::train;
};

struct DomainDataset {
  int k = 0;
  int r = 0;
  int p = 0;
  std::vector<DataRecord> records;
};

// Label-stripped view: what pipeline stages are allowed to see. Labels stay on
// the dataset and are only consulted by the metric stage.
struct UnlabeledView {
  Matrix x;                       // one row per point
  std::vector<int> domains;       // parallel to rows of x
  std::vector<int> record_index;  // row -> index into the source dataset
  int r = 0;
  int p = 0;
};

UnlabeledView unlabeled_view(const DomainDataset& data, std::initializer_list<Split> splits);
std::vector<int> labels_of(const DomainDataset& data, const std::vector<int>& record_index);

struct SplitFractions {
  double train = 0.6;
  double valid = 0.2;
  double test = 0.2;
};

// Largest-remainder apportionment of n into counts proportional to dist;
// remainders broken by largest fractional part, then lowest index.
std::vector<int> quota_counts(const SimplexVec& dist, int n);

// Class priors induced by equal domain representation: q(y) = mean_d q_yd[y, d].
Vector class_priors(const StochasticMatrix& q_yd);

// Acceptance predicate for a sampled label-marginal matrix.
bool marginals_acceptable(const Matrix& q_yd, double kappa_max, double min_class_prior = 0.0);

struct MarginalsResult {
  StochasticMatrix q_yd;  // k x r
  int attempts = 0;
  double cond = 0.0;
};

// Draws each column of Q_{Y|D} i.i.d. from Dir((alpha/k) * 1_k) and rejects
// draws with cond > kappa_max, rank < k, or (optionally) a class prior below
// min_class_prior. Throws GenerationBudgetExceeded after `budget` attempts.
MarginalsResult sample_label_marginals(const ProblemParams& params, std::mt19937_64& rng,
                                       double min_class_prior = 0.0, int budget = 10000);

// Draws Q_{Y|D} with each domain supported on exactly two classes: the class
// pairs cycle through a shuffled list of all k*(k-1)/2 pairs and the weight
// within a pair is Beta(2, 2). Domains with zero mass on most classes make the
// factorization of any anchored product strictly unique, which dense Dirichlet
// columns (all classes present everywhere) do not guarantee. Rejects draws
// with cond > kappa_max or any class absent from every domain; requires k >= 2.
MarginalsResult sample_pair_support_marginals(const ProblemParams& params,
                                              std::mt19937_64& rng, int budget = 10000);

// Unit blocks along the first axis: each class gets a disjoint anchor block of
// weight 1 - overlap_fraction (slot order shuffled by rng) and, when
// overlap_fraction > 0, every class shares one common block of that weight.
// Remaining axes are uniform on [0, 1] and carry no class signal.
MixtureSpec make_block_mixture(const ProblemParams& params, int p, double overlap_fraction,
                               std::mt19937_64& rng);

// Draws n_per_domain points per domain per the split fractions; per-domain
// label counts follow quota_counts on the domain's marginal column.
DomainDataset sample_dataset(const StochasticMatrix& q_yd, const MixtureSpec& spec,
                             int n_per_domain, const SplitFractions& splits,
                             std::mt19937_64& rng);

// Column-stochastic word-class matrix with anchors_per_class rows per class
// that are positive in that class's column only.
StochasticMatrix sample_anchored_word_distribution(int vocab, int k, int anchors_per_class,
                                                   std::mt19937_64& rng);

DomainDataset sample_discrete_dataset(const StochasticMatrix& q_yd,
                                      const StochasticMatrix& q_xy, int n_per_domain,
                                      const SplitFractions& splits, std::mt19937_64& rng);

struct ProblemInstance {
  ProblemParams params;
  StochasticMatrix q_yd;                 // ground-truth label marginals, k x r
  std::optional<MixtureSpec> spec;       // continuous instances
  std::optional<StochasticMatrix> q_xy;  // discrete instances, vocab x k
  DomainDataset data;

  bool discrete() const { return q_xy.has_value(); }
};

struct BlockInstanceConfig {
  ProblemParams params;
  int p = 2;
  double overlap_fraction = 0.0;
  int n_per_domain = 1000;
  SplitFractions splits;
};

struct DiscreteInstanceConfig {
  ProblemParams params;
  int vocab = 20;
  int anchors_per_class = 1;
  int n_per_domain = 0;  // 0 keeps the instance exact (matrices only)
  SplitFractions splits;
};

// Generation couples the marginal sampler to the anchor-mass assumption: the
// anchor region of class y carries mass q(y) * (1 - overlap), so draws are
// rejected until every class clears epsilon with a little headroom for the
// integral rounding of finite samples.
ProblemInstance make_block_instance(const BlockInstanceConfig& cfg);
ProblemInstance make_discrete_instance(const DiscreteInstanceConfig& cfg);

// Exact word-domain marginal Q_{X|D} = Q_{X|Y} Q_{Y|D} of a discrete instance.
StochasticMatrix exact_word_domain_matrix(const ProblemInstance& instance);

// Ground-truth domain discriminator q(d | x) and class posterior q(y | x),
// computed from the instance densities under equal domain representation.
class OracleDiscriminator {
 public:
  explicit OracleDiscriminator(const ProblemInstance& instance);

  int domains() const { return r_; }
  const Vector& priors() const { return q_y_; }

  SimplexVec domain_posterior(const Vector& x) const;  // f(x), length r
  SimplexVec class_posterior(const Vector& x) const;   // g(x), length k

  // f over the rows of a view, one row per point.
  Matrix domain_posterior_rows(const Matrix& x) const;

 private:
  Vector class_densities(const Vector& x) const;

  int k_ = 0;
  int r_ = 0;
  Matrix q_yd_;
  Vector q_y_;
  std::optional<MixtureSpec> spec_;
  std::optional<Matrix> q_xy_;
};

}  // namespace lls
