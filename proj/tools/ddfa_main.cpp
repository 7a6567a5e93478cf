// Command-line front end for the latent label shift pipeline: generate
// synthetic benchmarks, train the domain discriminator, run the
// discriminate-discretize-factorize-adjust pipeline, sweep parameter grids,
// and self-test the library's analytic guarantees.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lls/io.hpp"
#include "lls/rng.hpp"

namespace fs = std::filesystem;
using lls::json;
using lls::Matrix;
using lls::Vector;

namespace {

// Exit codes: 0 success, 1 validation (bad flags, config, or input files),
// 2 runtime failure inside the pipeline, 3 partial sweep failure.
int exit_code_for(const lls::Error& e) {
  switch (e.code()) {
    case lls::errc::parse_error:
    case lls::errc::invalid_input:
    case lls::errc::io_error:
      return 1;
    default:
      return 2;
  }
}

std::string out_path(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) lls::fail(lls::errc::io_error, "cannot create output directory " + dir);
}

lls::ProblemInstance build_instance(const lls::RunConfig& cfg) {
  if (cfg.kind == "discrete")
    return lls::make_discrete_instance(lls::discrete_instance_config(cfg));
  return lls::make_block_instance(lls::block_instance_config(cfg));
}

// --- generate ----------------------------------------------------------------

int cmd_generate(const lls::RunConfig& cfg, const std::string& out_dir) {
  const lls::ProblemInstance instance = build_instance(cfg);
  ensure_out_dir(out_dir);
  const json resolved = lls::resolved_config_json(cfg);
  lls::write_dataset_csv(out_path(out_dir, "dataset.csv"), instance.data, cfg.hide_labels);
  lls::write_json_file(out_path(out_dir, "truth.json"), lls::ground_truth_json(instance, resolved));
  lls::write_json_file(out_path(out_dir, "resolved_config.json"), resolved);
  std::printf("wrote %zu records (k=%d r=%d p=%d, labels %s) and ground truth to %s\n",
              instance.data.records.size(), instance.data.k, instance.data.r, instance.data.p,
              cfg.hide_labels ? "hidden" : "visible", out_dir.c_str());
  return 0;
}

// --- train-disc --------------------------------------------------------------

int cmd_train_disc(const lls::RunConfig& cfg, const std::string& data_path,
                   const std::string& out_dir) {
  const lls::DomainDataset data = lls::read_dataset_csv(data_path);
  const lls::UnlabeledView train = lls::unlabeled_view(data, {lls::Split::train});
  const lls::UnlabeledView valid = lls::unlabeled_view(data, {lls::Split::valid});

  lls::TrainConfig tc = cfg.train;
  tc.seed = lls::derive_seed(cfg.params.seed, 1);  // same stream the pipeline uses
  const lls::TrainResult result = lls::train_discriminator(train, valid, tc);

  ensure_out_dir(out_dir);
  const json resolved = lls::resolved_config_json(cfg);
  lls::write_json_file(out_path(out_dir, "model.json"),
                       lls::discriminator_json(result.model, resolved));
  lls::write_loss_curve_csv(out_path(out_dir, "loss_curve.csv"), result.curve);
  lls::write_json_file(out_path(out_dir, "resolved_config.json"), resolved);
  std::printf("trained on %ld points over %d domains; best epoch %d, valid loss %s\n",
              static_cast<long>(train.x.rows()), train.r, result.best_epoch,
              lls::format_double(result.best_valid_loss).c_str());
  return 0;
}

// --- run ---------------------------------------------------------------------

int cmd_run(const lls::RunConfig& cfg, const std::string& data_path,
            const std::string& truth_path, const std::string& out_dir, bool with_metrics) {
  lls::DomainDataset data = lls::read_dataset_csv(data_path);
  const lls::PipelineMode mode = lls::parse_pipeline_mode(cfg.mode);

  lls::PipelineConfig pipeline_cfg = lls::pipeline_config(cfg);
  lls::ProblemInstance instance = [&] {
    if (with_metrics) {
      if (truth_path.empty())
        lls::fail(lls::errc::invalid_input, "--with-metrics needs --truth FILE");
      pipeline_cfg.have_true_q_yd = true;
      return lls::instance_from_truth(lls::load_json_file(truth_path), std::move(data));
    }
    pipeline_cfg.have_true_q_yd = false;
    return lls::blind_instance(std::move(data), cfg.params.k);
  }();
  if (mode == lls::PipelineMode::oracle_f && !instance.spec && !instance.q_xy)
    lls::fail(lls::errc::invalid_input,
              "oracle mode needs --with-metrics and a ground-truth file carrying densities");

  const lls::PipelineResult result = lls::run_pipeline(instance, mode, pipeline_cfg);

  ensure_out_dir(out_dir);
  const json resolved = lls::resolved_config_json(cfg);
  lls::write_json_file(out_path(out_dir, "report.json"),
                       lls::report_json(result.report, resolved));
  lls::write_json_file(out_path(out_dir, "timings.json"), lls::timings_json(result.report));
  std::vector<int> domains;
  domains.reserve(result.test_record_index.size());
  for (int idx : result.test_record_index)
    domains.push_back(instance.data.records[static_cast<size_t>(idx)].domain);
  lls::write_predictions_csv(out_path(out_dir, "predictions.csv"), result.test_record_index,
                             domains, result.predictions);
  lls::write_clusters_csv(out_path(out_dir, "clusters.csv"), result.test_record_index,
                          result.test_clusters, domains);
  if (result.factors)
    lls::write_json_file(out_path(out_dir, "factors.json"),
                         lls::factors_json(*result.factors, resolved));
  if (result.discriminator)
    lls::write_json_file(out_path(out_dir, "model.json"),
                         lls::discriminator_json(*result.discriminator, resolved));
  lls::write_json_file(out_path(out_dir, "resolved_config.json"), resolved);

  const lls::EvalReport& rep = result.report;
  if (rep.label_metrics)
    std::printf("mode %s: scored %d points, matched accuracy %s%s\n", rep.mode.c_str(), rep.n_test,
                lls::format_double(rep.accuracy).c_str(),
                rep.truth_metrics
                    ? (", marginal error " + lls::format_double(rep.q_yd_err)).c_str()
                    : "");
  else
    std::printf("mode %s: scored %d points (no labels: metrics omitted)\n", rep.mode.c_str(),
                rep.n_test);
  std::printf("report written to %s\n", out_path(out_dir, "report.json").c_str());
  return 0;
}

// --- sweep ---------------------------------------------------------------------

int cmd_sweep(const lls::RunConfig& cfg, const std::string& out_dir, int jobs) {
  const lls::SweepGrid grid = lls::sweep_grid(cfg);
  const lls::PipelineConfig base = lls::pipeline_config(cfg);
  const lls::SweepResult result = lls::sweep(grid, base, jobs);

  ensure_out_dir(out_dir);
  const json resolved = lls::resolved_config_json(cfg);
  lls::write_text_file(out_path(out_dir, "reports.jsonl"), lls::reports_jsonl(result, resolved));
  const std::string summary = lls::summary_csv(result);
  lls::write_text_file(out_path(out_dir, "summary.csv"), summary);
  lls::write_json_file(out_path(out_dir, "resolved_config.json"), resolved);
  std::fputs(summary.c_str(), stdout);

  int failed = 0;
  for (const lls::SweepRun& run : result.runs)
    if (!run.report) ++failed;
  if (failed == 0) return 0;
  std::fprintf(stderr, "%d of %zu cells failed (first error: %s)\n", failed, result.runs.size(),
               [&]() -> std::string {
                 for (const lls::SweepRun& run : result.runs)
                   if (!run.report) return run.error;
                 return "";
               }()
                   .c_str());
  return failed == static_cast<int>(result.runs.size()) ? 2 : 3;
}

// --- selftest -------------------------------------------------------------------

// Each check throws on failure; the runner prints one status line per check.
struct Check {
  const char* name;
  std::function<void()> body;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

lls::ProblemInstance selftest_block_instance(std::uint64_t seed, double overlap, double epsilon,
                                             double alpha, int n_per_domain) {
  lls::BlockInstanceConfig cfg;
  cfg.params.k = 3;
  cfg.params.r = 5;
  cfg.params.alpha = alpha;
  cfg.params.kappa_max = 20.0;
  cfg.params.epsilon = epsilon;
  cfg.params.m = 4;
  cfg.params.seed = seed;
  cfg.p = 2;
  cfg.overlap_fraction = overlap;
  cfg.n_per_domain = n_per_domain;
  return lls::make_block_instance(cfg);
}

void check_assignment_oracle() {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> entry(0, 20);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix confusion(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) confusion(i, j) = entry(rng);
    if (confusion.sum() == 0.0) confusion(0, 0) = 1.0;
    const lls::MatchResult got = lls::hungarian_match(confusion);
    std::vector<int> perm{0, 1, 2, 3};
    double best = -1.0;
    do {
      double s = 0.0;
      for (int t = 0; t < 4; ++t) s += confusion(t, perm[static_cast<size_t>(t)]);
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    double chosen = 0.0;
    for (int t = 0; t < 4; ++t) chosen += confusion(t, got.permutation[static_cast<size_t>(t)]);
    expect(chosen == best, "assignment missed the optimum on trial " + std::to_string(trial));
  }
}

void check_pseudo_inverse_round_trip() {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + trial % 3;
    const int r = k + 1 + trial % 4;
    Matrix q(k, r);
    for (int y = 0; y < k; ++y)
      for (int d = 0; d < r; ++d) q(y, d) = unit(rng);
    const lls::StochasticMatrix q_dy =
        lls::q_d_given_y(lls::StochasticMatrix::proportional_columns(q));
    Vector g_raw(k);
    for (int y = 0; y < k; ++y) g_raw(y) = unit(rng);
    const lls::SimplexVec g = lls::SimplexVec::proportional(g_raw);
    const Vector f = q_dy.mat() * g.vec();
    const Vector back = lls::pseudo_inverse_solve(q_dy.mat(), f);
    for (int y = 0; y < k; ++y)
      expect(std::abs(back(y) - g[y]) <= 1e-8, "round trip diverged at trial " +
                                                   std::to_string(trial));
  }
}

void check_posterior_recovery() {
  const auto instance = selftest_block_instance(5, 0.3, 0.05, 4.0, 200);
  const lls::OracleDiscriminator oracle(instance);
  const int k = instance.params.k;
  const int r = instance.params.r;
  int seen = 0;
  for (size_t i = 0; i < instance.data.records.size() && seen < 1000; i += 3, ++seen) {
    const Vector& x = instance.data.records[i].x;
    const int d = instance.data.records[i].domain;
    const Vector f = oracle.domain_posterior(x).vec();
    const lls::Prediction pred = lls::adjust_predict(instance.q_yd, f, d);
    // Recovered q(y|x) against the analytic class posterior.
    const lls::SimplexVec truth = oracle.class_posterior(x);
    for (int y = 0; y < k; ++y)
      expect(std::abs(pred.q_y_given_x[y] - truth[y]) <= 1e-8, "class posterior drifted");
    // Domain-adjusted posterior against direct Bayes with the true densities.
    Vector direct(k);
    for (int y = 0; y < k; ++y) direct(y) = instance.spec->density(x, y) * instance.q_yd(y, d);
    direct /= direct.sum();
    for (int y = 0; y < k; ++y)
      expect(std::abs(pred.q_y_given_x_d[y] - direct(y)) <= 1e-8, "adjusted posterior drifted");
    (void)r;
  }
  expect(seen > 50, "too few sampled points");
}

void check_anchor_signatures() {
  const auto instance = selftest_block_instance(6, 0.3, 0.05, 1.0, 200);
  const lls::OracleDiscriminator oracle(instance);
  const lls::StochasticMatrix q_dy = lls::q_d_given_y(instance.q_yd);
  const int k = instance.params.k;
  const int r = instance.params.r;
  int anchored = 0;
  for (size_t i = 0; i < instance.data.records.size(); i += 2) {
    const Vector& x = instance.data.records[i].x;
    const Vector f = oracle.domain_posterior(x).vec();
    const lls::SimplexVec g = oracle.class_posterior(x);
    // f(x) always decomposes through the label: f = Q_{D|Y} g.
    const Vector composed = q_dy.mat() * g.vec();
    expect((f - composed).cwiseAbs().maxCoeff() <= 1e-12, "f(x) left the marginal cone");
    for (int y = 0; y < k; ++y) {
      const bool inside = instance.spec->in_anchor(x, y);
      const bool one_hot = g[y] >= 1.0 - 1e-12;
      expect(inside == one_hot, "anchor membership and one-hot posterior disagree");
      if (inside) {
        ++anchored;
        for (int d = 0; d < r; ++d)
          expect(std::abs(f(d) - q_dy(d, y)) <= 1e-12, "anchor signature differs from column");
      }
    }
  }
  expect(anchored > 20, "no anchor points sampled");
}

void check_marginal_sampler() {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    lls::ProblemParams params;
    params.k = 3;
    params.r = 6;
    params.alpha = 0.5;
    params.kappa_max = 15.0;
    params.m = 3;
    params.seed = seed;
    auto rng = lls::make_rng(seed);
    const lls::MarginalsResult drawn = lls::sample_label_marginals(params, rng, 0.01);
    expect(drawn.cond <= params.kappa_max, "condition bound violated");
    for (int y = 0; y < params.k; ++y) {
      double prior = 0.0;
      for (int d = 0; d < params.r; ++d) prior += drawn.q_yd(y, d);
      prior /= params.r;
      expect(prior > 0.0, "a class lost all probability");
    }
    // Columns of Q_{D|Y} stay linearly independent.
    const double cond =
        lls::condition_number_2norm(lls::q_d_given_y(drawn.q_yd).mat());
    expect(std::isfinite(cond), "Q_{D|Y} columns collapsed");
  }
}

void check_exact_factorization() {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    lls::DiscreteInstanceConfig cfg;
    cfg.params.k = 4;
    cfg.params.r = 8;
    cfg.params.alpha = 1.0;
    cfg.params.kappa_max = 10.0;
    cfg.params.epsilon = 0.05;
    cfg.params.m = 20;
    cfg.params.seed = seed;
    cfg.vocab = 20;
    cfg.anchors_per_class = 3;
    cfg.n_per_domain = 0;  // exact matrices only
    const lls::ProblemInstance instance = lls::make_discrete_instance(cfg);
    const lls::StochasticMatrix v = lls::exact_word_domain_matrix(instance);
    const lls::FactorizationResult fact = lls::spa_anchor_nmf(v, cfg.params.k);

    // Match recovered rows to true rows, then compare entrywise.
    const int k = cfg.params.k;
    Matrix score(k, k);
    for (int t = 0; t < k; ++t)
      for (int p = 0; p < k; ++p)
        score(t, p) = 2.0 * cfg.params.r -
                      (instance.q_yd.mat().row(t) - fact.h.mat().row(p)).cwiseAbs().sum();
    const lls::MatchResult match = lls::hungarian_match(score);
    for (int t = 0; t < k; ++t) {
      const int p = match.permutation[static_cast<size_t>(t)];
      const double err =
          (instance.q_yd.mat().row(t) - fact.h.mat().row(p)).cwiseAbs().maxCoeff();
      expect(err <= 1e-6, "anchored recovery off by " + lls::format_double(err));
    }
  }
}

void check_gradients() {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> target(0, 2);
  for (int trial = 0; trial < 5; ++trial) {
    const lls::Arch arch = trial % 2 == 0 ? lls::Arch::softmax_linear : lls::Arch::one_hidden_layer;
    lls::DiscriminatorModel model = lls::init_model(arch, 3, 3, 4, 100 + trial);
    Matrix x(8, 3);
    for (int i = 0; i < x.size(); ++i) x(i) = normal(rng);
    std::vector<int> targets(8);
    for (int& t : targets) t = target(rng);

    Vector grad;
    lls::batch_loss_and_grad(model, x, targets, 0.01, &grad);
    Vector theta = lls::flatten_params(model);
    const double h = 1e-6;
    for (int j = 0; j < theta.size(); ++j) {
      Vector lo = theta, hi = theta;
      lo(j) -= h;
      hi(j) += h;
      lls::DiscriminatorModel probe = model;
      lls::unflatten_params(probe, hi);
      const double f_hi = lls::batch_loss_and_grad(probe, x, targets, 0.01, nullptr);
      lls::unflatten_params(probe, lo);
      const double f_lo = lls::batch_loss_and_grad(probe, x, targets, 0.01, nullptr);
      const double fd = (f_hi - f_lo) / (2.0 * h);
      const double rel = std::abs(grad(j) - fd) / std::max(1.0, std::abs(fd));
      expect(rel <= 1e-5, "gradient coordinate " + std::to_string(j) + " off by " +
                              lls::format_double(rel));
    }
  }
}

void check_end_to_end_oracle() {
  const auto instance = selftest_block_instance(3, 0.0, 0.3, 0.5, 400);
  lls::PipelineConfig cfg;
  cfg.m = 3;  // without overlap the oracle posterior takes exactly k values
  cfg.seed = 7;
  const lls::PipelineResult result =
      lls::run_pipeline(instance, lls::PipelineMode::oracle_f, cfg);
  expect(result.report.accuracy == 1.0,
         "oracle accuracy " + lls::format_double(result.report.accuracy));
  expect(result.report.q_yd_err <= 1e-2,
         "marginal error " + lls::format_double(result.report.q_yd_err));
}

void check_negative_control() {
  // Two identical label rows make Q_{D|Y} rank deficient; the adjustment must
  // refuse it rather than emit a posterior.
  Matrix degenerate(3, 4);
  degenerate.row(0) = Eigen::RowVector4d(0.3, 0.2, 0.25, 0.4);
  degenerate.row(1) = degenerate.row(0);
  degenerate.row(2) = Eigen::RowVector4d(0.4, 0.6, 0.5, 0.2);
  const lls::StochasticMatrix q_yd =
      lls::StochasticMatrix::proportional_columns(degenerate);
  const Vector f = lls::q_d_given_y(q_yd).mat().col(0);
  bool caught = false;
  try {
    (void)lls::adjust_predict(q_yd, f, 0);
  } catch (const lls::Error& e) {
    caught = e.code() == lls::errc::rank_deficient;
  }
  expect(caught, "rank-deficient marginals were not rejected");
}

int cmd_selftest() {
  const std::vector<Check> checks = {
      {"assignment solver matches brute force", check_assignment_oracle},
      {"pseudo-inverse round-trips simplex mixtures", check_pseudo_inverse_round_trip},
      {"oracle posteriors match the analytic mixture posterior", check_posterior_recovery},
      {"anchor points pin the domain signature", check_anchor_signatures},
      {"sampled marginals keep every class alive and well-conditioned", check_marginal_sampler},
      {"exact anchored factorization is recovered", check_exact_factorization},
      {"analytic gradients match central differences", check_gradients},
      {"end-to-end oracle pipeline is exact on an easy instance", check_end_to_end_oracle},
      {"negative control: rank-deficient marginals are rejected", check_negative_control},
  };
  int failed = 0;
  const auto suite_start = std::chrono::steady_clock::now();
  for (const Check& check : checks) {
    const auto start = std::chrono::steady_clock::now();
    std::string error;
    try {
      check.body();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - start)
                               .count();
    if (error.empty()) {
      std::printf("[ ok ] %-58s (%.2fs)\n", check.name, seconds);
    } else {
      std::printf("[FAIL] %-58s (%.2fs)\n       %s\n", check.name, seconds, error.c_str());
      ++failed;
    }
  }
  const double total = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - suite_start)
                           .count();
  if (failed == 0) {
    std::printf("all %zu checks passed in %.2fs\n", checks.size(), total);
    return 0;
  }
  std::printf("%d of %zu checks failed\n", failed, checks.size());
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent label shift identification: discriminate, discretize, factorize, adjust"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string data_path;
  std::string truth_path;
  std::string mode_override;
  std::uint64_t seed_override = 0;
  bool with_metrics = false;
  int jobs = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
    cmd->add_option("--out", out_dir, "output directory")->capture_default_str();
    return cmd->add_option("--seed", seed_override, "override the config seed");
  };

  CLI::App* generate = app.add_subcommand("generate", "write a synthetic dataset + ground truth");
  CLI::Option* gen_seed = add_common(generate);

  CLI::App* train = app.add_subcommand("train-disc", "train the domain discriminator alone");
  CLI::Option* train_seed = add_common(train);
  train->add_option("--data", data_path, "dataset CSV")->required();

  CLI::App* run = app.add_subcommand("run", "run the full pipeline on a dataset");
  CLI::Option* run_seed = add_common(run);
  run->add_option("--data", data_path, "dataset CSV")->required();
  run->add_option("--truth", truth_path, "ground-truth JSON (only read with --with-metrics)");
  run->add_option("--mode", mode_override, "oracle | learned | naive");
  run->add_flag("--with-metrics", with_metrics, "score against the ground-truth file");

  CLI::App* sweep = app.add_subcommand("sweep", "run the config's parameter grid");
  CLI::Option* sweep_seed = add_common(sweep);
  sweep->add_option("--jobs", jobs, "parallel sweep cells")->capture_default_str();

  app.add_subcommand("selftest", "verify the library's analytic guarantees");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    lls::RunConfig cfg = config_path.empty() ? lls::parse_run_config(json::object())
                                             : lls::load_run_config(config_path);
    const CLI::Option* seeds[] = {gen_seed, train_seed, run_seed, sweep_seed};
    for (const CLI::Option* opt : seeds)
      if (opt->count() > 0) cfg.params.seed = seed_override;
    if (!mode_override.empty()) {
      lls::parse_pipeline_mode(mode_override);  // validate early
      cfg.mode = mode_override;
    }

    if (app.got_subcommand("generate")) return cmd_generate(cfg, out_dir);
    if (app.got_subcommand("train-disc")) return cmd_train_disc(cfg, data_path, out_dir);
    if (app.got_subcommand("run")) return cmd_run(cfg, data_path, truth_path, out_dir, with_metrics);
    if (app.got_subcommand("sweep")) return cmd_sweep(cfg, out_dir, jobs);
    return cmd_selftest();
  } catch (const lls::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
