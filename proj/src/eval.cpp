#include "lls/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>
#include <utility>

#include "lls/rng.hpp"

namespace lls {

namespace {

// Shortest-augmenting-path assignment with dual potentials: minimizes the
// total cost of a perfect matching on a square matrix in O(n^3).
std::vector<int> min_cost_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> match(static_cast<size_t>(n) + 1, 0);  // column -> row, 1-based
  std::vector<int> way(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n) + 1, inf);
    std::vector<bool> used(static_cast<size_t>(n) + 1, false);
    do {
      used[static_cast<size_t>(j0)] = true;
      const int i0 = match[static_cast<size_t>(j0)];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<size_t>(n), -1);
  for (int j = 1; j <= n; ++j) row_to_col[static_cast<size_t>(match[static_cast<size_t>(j)]) - 1] = j - 1;
  return row_to_col;
}

struct Stopwatch {
  std::chrono::steady_clock::time_point mark = std::chrono::steady_clock::now();
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - mark).count();
    mark = now;
    return s;
  }
};

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (xs.size() == 1) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace

MatchResult hungarian_match(const Matrix& confusion) {
  if (confusion.rows() != confusion.cols())
    fail(errc::shape_mismatch, "confusion matrix must be square");
  if (confusion.size() == 0) fail(errc::invalid_input, "confusion matrix is empty");
  if (confusion.minCoeff() < 0.0)
    fail(errc::invalid_input, "confusion entries must be non-negative");
  const double total = confusion.sum();
  if (!(total > 0.0)) fail(errc::invalid_input, "confusion matrix has no mass");

  MatchResult out;
  const Matrix negated = -confusion;
  out.permutation = min_cost_assignment(negated);
  double matched = 0.0;
  for (int t = 0; t < confusion.rows(); ++t) matched += confusion(t, out.permutation[static_cast<size_t>(t)]);
  out.accuracy = matched / total;
  return out;
}

double q_yd_error(const StochasticMatrix& q_hat, const StochasticMatrix& q_true,
                  const std::vector<int>& permutation) {
  const int k = q_true.rows();
  const int r = q_true.cols();
  if (q_hat.rows() != k || q_hat.cols() != r)
    fail(errc::shape_mismatch, "marginal matrices have different shapes");
  if (static_cast<int>(permutation.size()) != k)
    fail(errc::invalid_input, "permutation length differs from the class count");
  std::vector<bool> seen(static_cast<size_t>(k), false);
  for (int p : permutation) {
    if (p < 0 || p >= k || seen[static_cast<size_t>(p)])
      fail(errc::invalid_input, "permutation is not a bijection");
    seen[static_cast<size_t>(p)] = true;
  }
  double total = 0.0;
  for (int t = 0; t < k; ++t)
    total +=
        (q_hat.mat().row(permutation[static_cast<size_t>(t)]) - q_true.mat().row(t)).cwiseAbs().sum();
  return total / static_cast<double>(k * r);
}

std::string to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::oracle_f: return "oracle";
    case PipelineMode::learned_f: return "learned";
    case PipelineMode::naive: return "naive";
  }
  fail(errc::invalid_input, "unknown pipeline mode");
}

std::string to_string(Solver solver) {
  switch (solver) {
    case Solver::multiplicative: return "mu";
    case Solver::anchor: return "spa";
  }
  fail(errc::invalid_input, "unknown solver");
}

PipelineMode parse_pipeline_mode(const std::string& name) {
  if (name == "oracle") return PipelineMode::oracle_f;
  if (name == "learned") return PipelineMode::learned_f;
  if (name == "naive") return PipelineMode::naive;
  fail(errc::invalid_input, "mode must be oracle, learned, or naive, got '" + name + "'");
}

Solver parse_solver(const std::string& name) {
  if (name == "mu") return Solver::multiplicative;
  if (name == "spa") return Solver::anchor;
  fail(errc::invalid_input, "solver must be mu or spa, got '" + name + "'");
}

PipelineResult run_pipeline(const ProblemInstance& instance, PipelineMode mode,
                            const PipelineConfig& cfg) {
  const int k = instance.params.k;
  const int r = instance.params.r;
  if (cfg.m < 1) fail(errc::invalid_input, "cluster count must be >= 1");
  if (instance.data.records.empty()) fail(errc::invalid_input, "instance carries no data");

  const UnlabeledView fit = unlabeled_view(instance.data, {Split::train, Split::valid});
  const UnlabeledView test = unlabeled_view(instance.data, {Split::test});
  if (fit.x.rows() == 0) fail(errc::invalid_input, "train+valid split is empty");
  if (test.x.rows() == 0) fail(errc::invalid_input, "test split is empty");

  PipelineResult out;
  EvalReport& rep = out.report;
  rep.mode = to_string(mode);
  rep.k = k;
  rep.r = r;
  rep.m = cfg.m;
  rep.n_test = static_cast<int>(test.x.rows());
  rep.seed = cfg.seed;
  out.test_record_index = test.record_index;

  std::string stage = "setup";
  Stopwatch watch;
  try {
    stage = "represent";
    Matrix fit_rep;
    Matrix test_rep;
    if (mode == PipelineMode::oracle_f) {
      OracleDiscriminator oracle(instance);
      fit_rep = oracle.domain_posterior_rows(fit.x);
      test_rep = oracle.domain_posterior_rows(test.x);
    } else if (mode == PipelineMode::learned_f) {
      const UnlabeledView train = unlabeled_view(instance.data, {Split::train});
      const UnlabeledView valid = unlabeled_view(instance.data, {Split::valid});
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.seed, 1);
      TrainResult trained = train_discriminator(train, valid, tc);
      fit_rep = trained.model.predict_rows(fit.x);
      test_rep = trained.model.predict_rows(test.x);
      out.discriminator = std::move(trained.model);
    } else {
      // Class information in block layouts lives on axis 0; a random mix of
      // the remaining axes is a representation that cannot see the class.
      if (fit.p < 2) fail(errc::invalid_input, "naive mode needs >= 2 feature axes to stay class-blind");
      if (cfg.naive_dim < 1) fail(errc::invalid_input, "naive projection dimension must be >= 1");
      auto rng = make_rng(derive_seed(cfg.seed, 4));
      std::normal_distribution<double> normal(0.0, 1.0);
      Matrix g(cfg.naive_dim, fit.p - 1);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) g(i, j) = normal(rng);
      fit_rep = fit.x.rightCols(fit.p - 1) * g.transpose();
      test_rep = test.x.rightCols(test.p - 1) * g.transpose();
      out.naive_projection = std::move(g);
    }
    rep.timings.push_back({stage, watch.lap()});

    stage = "cluster";
    KmeansOptions km = cfg.kmeans;
    km.seed = derive_seed(cfg.seed, 2);
    ClusterModel clusters = kmeans(fit_rep, cfg.m, km);
    const std::vector<int> fit_cells = clusters.assign_rows(fit_rep);
    rep.timings.push_back({stage, watch.lap()});

    stage = "tabularize";
    const TabularizeResult table = tabularize(fit_cells, fit.domains, cfg.m, r);
    rep.timings.push_back({stage, watch.lap()});

    stage = "factorize";
    NmfOptions nm = cfg.nmf;
    nm.seed = derive_seed(cfg.seed, 3);
    if (cfg.m < k) nm.allow_overcomplete = true;  // cluster-count ablation
    const bool use_anchor = cfg.solver == Solver::anchor && mode != PipelineMode::naive;
    FactorizationResult fact =
        use_anchor ? spa_anchor_nmf(table.q_cd, k) : nmf(table.q_cd, k, nm);
    rep.q_yd_hat = fact.h.mat();
    rep.nmf_residual = fact.residual;
    rep.nmf_converged = fact.converged;
    rep.nmf_iterations = fact.iterations;
    rep.timings.push_back({stage, watch.lap()});

    stage = "predict";
    out.predictions.reserve(static_cast<size_t>(test.x.rows()));
    out.test_clusters = clusters.assign_rows(test_rep);
    if (mode == PipelineMode::naive) {
      for (int i = 0; i < test.x.rows(); ++i)
        out.predictions.push_back(
            naive_predict(fact.w, fact.h, out.test_clusters[static_cast<size_t>(i)],
                          test.domains[static_cast<size_t>(i)]));
    } else {
      for (int i = 0; i < test.x.rows(); ++i) {
        const Vector f = test_rep.row(i).transpose();
        out.predictions.push_back(adjust_predict(fact.h, f, test.domains[static_cast<size_t>(i)]));
      }
    }
    out.clusters = std::move(clusters);
    out.factors = std::move(fact);
    rep.timings.push_back({stage, watch.lap()});

    stage = "metrics";
    const std::vector<int> truth = labels_of(instance.data, test.record_index);
    bool labels_visible = true;
    for (int t : truth) {
      if (t == kHiddenLabel) {
        labels_visible = false;
        break;
      }
    }
    if (labels_visible) {
      Eigen::MatrixXi conf = Eigen::MatrixXi::Zero(k, k);
      for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= k)
          fail(errc::invalid_input, "test label outside [0, k)", static_cast<long>(i));
        conf(truth[i], out.predictions[i].y_pred) += 1;
      }
      const MatchResult match = hungarian_match(conf.cast<double>());
      rep.label_metrics = true;
      rep.confusion = conf;
      rep.permutation = match.permutation;
      rep.accuracy = match.accuracy;

      double recall_sum = 0.0;
      int classes_present = 0;
      for (int t = 0; t < k; ++t) {
        const double row = static_cast<double>(conf.row(t).sum());
        if (row > 0.0) {
          recall_sum += static_cast<double>(conf(t, match.permutation[static_cast<size_t>(t)])) / row;
          ++classes_present;
        }
      }
      rep.balanced_accuracy = classes_present > 0 ? recall_sum / classes_present : 0.0;

      Vector dom_correct = Vector::Zero(r);
      Vector dom_total = Vector::Zero(r);
      for (size_t i = 0; i < truth.size(); ++i) {
        const int d = test.domains[i];
        dom_total(d) += 1.0;
        if (out.predictions[i].y_pred == match.permutation[static_cast<size_t>(truth[i])])
          dom_correct(d) += 1.0;
      }
      rep.per_domain_accuracy = Vector::Zero(r);
      for (int d = 0; d < r; ++d)
        rep.per_domain_accuracy(d) = dom_total(d) > 0.0 ? dom_correct(d) / dom_total(d) : 0.0;

      if (cfg.have_true_q_yd) {
        rep.truth_metrics = true;
        rep.q_yd_err = q_yd_error(out.factors->h, instance.q_yd, match.permutation);
      }
    }
    rep.timings.push_back({stage, watch.lap()});
  } catch (const Error& e) {
    std::string msg = e.what();
    const std::string prefix = std::string(errc_name(e.code())) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    throw Error(e.code(), "stage " + stage + ": " + msg, e.index());
  }
  return out;
}

SweepResult sweep(const SweepGrid& grid, const PipelineConfig& base, int jobs) {
  if (grid.alphas.empty() || grid.kappas.empty() || grid.rs.empty() || grid.ms.empty() ||
      grid.modes.empty() || grid.seeds.empty())
    fail(errc::invalid_input, "sweep grid must be non-empty on every axis");
  if (jobs < 1) fail(errc::invalid_input, "jobs must be >= 1");

  struct Cell {
    double alpha;
    double kappa;
    int r;
    int m;
    PipelineMode mode;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double alpha : grid.alphas)
    for (double kappa : grid.kappas)
      for (int r : grid.rs)
        for (int m : grid.ms)
          for (PipelineMode mode : grid.modes)
            for (std::uint64_t seed : grid.seeds) cells.push_back({alpha, kappa, r, m, mode, seed});

  std::vector<SweepRun> runs(cells.size());
  auto execute = [&](size_t idx) {
    const Cell& c = cells[idx];
    SweepRun& run = runs[idx];
    run.alpha = c.alpha;
    run.kappa = c.kappa;
    run.r = c.r;
    run.m = c.m;
    run.mode = to_string(c.mode);
    run.seed = c.seed;
    try {
      BlockInstanceConfig icfg;
      icfg.params.k = grid.k;
      icfg.params.r = c.r;
      icfg.params.alpha = c.alpha;
      icfg.params.kappa_max = c.kappa;
      icfg.params.epsilon = grid.epsilon;
      icfg.params.m = c.m;  // bookkeeping only; generation never consumes m
      icfg.params.seed = c.seed;
      icfg.p = grid.p;
      icfg.overlap_fraction = grid.overlap_fraction;
      icfg.n_per_domain = grid.n_per_domain;
      icfg.splits = grid.splits;
      const ProblemInstance inst = make_block_instance(icfg);

      PipelineConfig cfg = base;
      cfg.m = c.m;
      cfg.seed = derive_seed(c.seed, 9001);
      run.report = std::move(run_pipeline(inst, c.mode, cfg).report);
    } catch (const std::exception& e) {
      run.error = e.what();
    }
  };

  if (jobs == 1) {
    for (size_t i = 0; i < cells.size(); ++i) execute(i);
  } else {
    std::atomic<size_t> next{0};
    const size_t n_threads = std::min(static_cast<size_t>(jobs), cells.size());
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (size_t t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) execute(i);
      });
    for (auto& th : pool) th.join();
  }

  SweepResult out;
  out.runs = std::move(runs);
  const size_t n_seeds = grid.seeds.size();
  for (size_t start = 0; start < out.runs.size(); start += n_seeds) {
    SweepRow row;
    const SweepRun& first = out.runs[start];
    row.alpha = first.alpha;
    row.kappa = first.kappa;
    row.r = first.r;
    row.m = first.m;
    row.mode = first.mode;
    std::vector<double> accs;
    std::vector<double> errs;
    for (size_t i = start; i < start + n_seeds; ++i) {
      const SweepRun& run = out.runs[i];
      if (run.report) {
        ++row.n_ok;
        accs.push_back(run.report->accuracy);
        errs.push_back(run.report->q_yd_err);
      } else {
        ++row.n_fail;
        if (row.error.empty()) row.error = run.error;
      }
    }
    row.acc_mean = mean_of(accs);
    row.acc_std = sample_std(accs);
    row.qyd_err_mean = mean_of(errs);
    row.qyd_err_std = sample_std(errs);
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace lls
