#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lls/adjust.hpp"
#include "lls/core.hpp"
#include "lls/discretize.hpp"
#include "lls/discriminator.hpp"
#include "lls/eval.hpp"
#include "lls/factorize.hpp"
#include "lls/synthgen.hpp"

namespace lls {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// File formats and run configuration. Every JSON document written by the tool
// embeds the fully-resolved config (which carries the seed); CSV outputs are
// covered by a sibling resolved_config.json in the same directory. All
// serialization is deterministic: keys are emitted in sorted order and
// floating-point values use the shortest round-trip form, so identical runs
// produce identical bytes.
// ---------------------------------------------------------------------------

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double x);

// Run configuration. JSON documents may set any subset of the documented
// keys; missing keys take the defaults below and unknown keys are rejected
// (parse_error naming the key). Per-stage seeds are not configurable: they
// derive from the root seed.
struct SweepLists {
  std::vector<double> alphas;        // empty -> {alpha}
  std::vector<double> kappas;        // empty -> {kappa_max}
  std::vector<int> rs;               // empty -> {r}
  std::vector<int> ms;               // empty -> {m}
  std::vector<std::string> modes;    // empty -> {mode}
  std::vector<std::uint64_t> seeds;  // empty -> {seed}
};

struct RunConfig {
  std::string kind = "block";  // block | discrete
  ProblemParams params;        // k, r, alpha, kappa_max, epsilon, m, seed
  std::string mode = "learned";
  std::string solver = "mu";
  int p = 2;
  double overlap_fraction = 0.3;
  int n_per_domain = 1000;
  SplitFractions splits;
  int vocab = 20;             // discrete kind
  int anchors_per_class = 1;  // discrete kind
  bool hide_labels = false;
  int naive_dim = 2;
  TrainConfig train;
  KmeansOptions kmeans;
  NmfOptions nmf;
  SweepLists sweep;
};

RunConfig parse_run_config(const json& doc);
RunConfig load_run_config(const std::string& path);
json resolved_config_json(const RunConfig& cfg);  // every key, final values

// Views of a RunConfig as the stage configs it mirrors.
BlockInstanceConfig block_instance_config(const RunConfig& cfg);
DiscreteInstanceConfig discrete_instance_config(const RunConfig& cfg);
PipelineConfig pipeline_config(const RunConfig& cfg);
SweepGrid sweep_grid(const RunConfig& cfg);

// Dataset CSV: header `split,domain,label,x0,...,x{p-1}`; split spelled
// train|valid|test; label -1 when hidden. Parse failures name the 1-based
// line.
void write_dataset_csv(const std::string& path, const DomainDataset& data, bool hide_labels);
DomainDataset read_dataset_csv(const std::string& path);

// Ground truth: {k, r, alpha, kappa_max, epsilon, seed, q_yd, spec|q_xy}.
json ground_truth_json(const ProblemInstance& instance, const json& config);
// Rebuilds a scorable instance from a truth document plus a dataset.
ProblemInstance instance_from_truth(const json& truth, DomainDataset data);
// Placeholder instance for blind runs: uniform marginals, no densities.
ProblemInstance blind_instance(DomainDataset data, int k);

// Discriminator model: architecture tag, dims, row-major weight arrays.
json discriminator_json(const DiscriminatorModel& model, const json& config);
DiscriminatorModel discriminator_from_json(const json& doc);

void write_loss_curve_csv(const std::string& path, const std::vector<LossCurvePoint>& curve);

json factors_json(const FactorizationResult& factors, const json& config);

void write_predictions_csv(const std::string& path, const std::vector<int>& record_index,
                           const std::vector<int>& domains,
                           const std::vector<Prediction>& predictions);

void write_clusters_csv(const std::string& path, const std::vector<int>& record_index,
                        const std::vector<int>& cluster_ids, const std::vector<int>& domains);

// Canonical report: metrics and recovered quantities only — stage timings are
// deliberately left out so repeated runs serialize to identical bytes. The
// sidecar carries the wall-clock numbers.
json report_json(const EvalReport& report, const json& config);
json timings_json(const EvalReport& report);

// Sweep outputs: one JSON object per run per line, and the summary CSV with
// header alpha,kappa,r,m,mode,acc_mean,acc_std,qyd_err_mean,qyd_err_std.
std::string reports_jsonl(const SweepResult& result, const json& config);
std::string summary_csv(const SweepResult& result);

// Whole-file helpers; failures raise io_error (open/write) or parse_error.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);
json load_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& doc);

}  // namespace lls
