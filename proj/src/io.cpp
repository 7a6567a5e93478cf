#include "lls/io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>
#include <utility>

namespace lls {

namespace {

// --- number formatting -----------------------------------------------------

[[noreturn]] void fail_line(long line, const std::string& msg) {
  fail(errc::parse_error, "line " + std::to_string(line) + ": " + msg, line);
}

double parse_double_token(std::string_view tok, long line) {
  double value = 0.0;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    fail_line(line, "bad number '" + std::string(tok) + "'");
  return value;
}

long parse_int_token(std::string_view tok, long line) {
  long value = 0;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    fail_line(line, "bad integer '" + std::string(tok) + "'");
  return value;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

// --- json helpers ------------------------------------------------------------

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& doc, const std::string& where) {
  if (!doc.is_array() || doc.empty()) fail(errc::parse_error, where + " must be a non-empty array");
  const size_t rows = doc.size();
  size_t cols = 0;
  for (size_t i = 0; i < rows; ++i) {
    const json& row = doc[i];
    if (!row.is_array() || row.empty())
      fail(errc::parse_error, where + " rows must be non-empty arrays");
    if (i == 0)
      cols = row.size();
    else if (row.size() != cols)
      fail(errc::parse_error, where + " rows have uneven lengths");
  }
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j) {
      const json& cell = doc[i][j];
      if (!cell.is_number()) fail(errc::parse_error, where + " entries must be numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cell.get<double>();
    }
  return m;
}

json vector_json(const Vector& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vector_from_json(const json& doc, const std::string& where) {
  if (!doc.is_array()) fail(errc::parse_error, where + " must be an array");
  Vector v(static_cast<Eigen::Index>(doc.size()));
  for (size_t i = 0; i < doc.size(); ++i) {
    if (!doc[i].is_number()) fail(errc::parse_error, where + " entries must be numbers");
    v(static_cast<Eigen::Index>(i)) = doc[i].get<double>();
  }
  return v;
}

void check_keys(const json& obj, const std::vector<std::string_view>& allowed,
                const std::string& where) {
  if (!obj.is_object()) fail(errc::parse_error, where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const auto& key : allowed)
      if (key == it.key()) {
        known = true;
        break;
      }
    if (!known) fail(errc::parse_error, "unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
struct is_vector : std::false_type {};
template <typename E>
struct is_vector<std::vector<E>> : std::true_type {
  using elem = E;
};

// nlohmann's arithmetic conversions truncate (2.5 -> 2), so scalar kinds are
// checked explicitly before extraction.
template <typename T>
bool json_scalar_is(const json& v) {
  if constexpr (std::is_same_v<T, bool>)
    return v.is_boolean();
  else if constexpr (std::is_same_v<T, std::string>)
    return v.is_string();
  else if constexpr (std::is_same_v<T, double>)
    return v.is_number();
  else if constexpr (std::is_same_v<T, std::uint64_t>)
    return v.is_number_unsigned() ||
           (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  else
    return v.is_number_integer();
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  const std::string what = "key '" + std::string(key) + "' in " + where;
  if constexpr (is_vector<T>::value) {
    using E = typename is_vector<T>::elem;
    if (!it->is_array()) fail(errc::parse_error, what + " must be an array");
    T out;
    for (const json& v : *it) {
      if (!json_scalar_is<E>(v)) fail(errc::parse_error, what + " has an entry of the wrong type");
      out.push_back(v.get<E>());
    }
    return out;
  } else {
    if (!json_scalar_is<T>(*it)) fail(errc::parse_error, what + " has the wrong type");
    return it->get<T>();
  }
}

// --- split names -------------------------------------------------------------

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  fail(errc::invalid_input, "unknown split");
}

Split split_of(std::string_view name, long line) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  fail_line(line, "unknown split '" + std::string(name) + "'");
}

// --- arch names --------------------------------------------------------------

const char* arch_name(Arch arch) {
  switch (arch) {
    case Arch::softmax_linear: return "softmax_linear";
    case Arch::one_hidden_layer: return "one_hidden_layer";
  }
  fail(errc::invalid_input, "unknown architecture");
}

Arch arch_of(const std::string& name, const std::string& where) {
  if (name == "softmax_linear") return Arch::softmax_linear;
  if (name == "one_hidden_layer") return Arch::one_hidden_layer;
  fail(errc::parse_error, where + " must be softmax_linear or one_hidden_layer, got '" + name + "'");
}

json mixture_spec_json(const MixtureSpec& spec) {
  json classes = json::array();
  for (const auto& cls : spec.classes) {
    json blocks = json::array();
    for (const auto& b : cls.blocks)
      blocks.push_back(
          {{"lo", vector_json(b.lo)}, {"hi", vector_json(b.hi)}, {"weight", b.weight}});
    classes.push_back({{"anchor_block", cls.anchor_block}, {"blocks", std::move(blocks)}});
  }
  return {{"k", spec.k},
          {"p", spec.p},
          {"overlap_fraction", spec.overlap_fraction},
          {"classes", std::move(classes)}};
}

MixtureSpec mixture_spec_from_json(const json& doc) {
  check_keys(doc, {"k", "p", "overlap_fraction", "classes"}, "spec");
  MixtureSpec spec;
  spec.k = get_or(doc, "k", 0, "spec");
  spec.p = get_or(doc, "p", 0, "spec");
  spec.overlap_fraction = get_or(doc, "overlap_fraction", 0.0, "spec");
  const auto it = doc.find("classes");
  if (it == doc.end() || !it->is_array()) fail(errc::parse_error, "spec.classes must be an array");
  for (const json& cls : *it) {
    check_keys(cls, {"anchor_block", "blocks"}, "spec.classes[]");
    ClassMixture mixture;
    mixture.anchor_block = get_or(cls, "anchor_block", 0, "spec.classes[]");
    const auto bit = cls.find("blocks");
    if (bit == cls.end() || !bit->is_array())
      fail(errc::parse_error, "spec.classes[].blocks must be an array");
    for (const json& b : *bit) {
      check_keys(b, {"lo", "hi", "weight"}, "spec.classes[].blocks[]");
      Block block;
      block.lo = vector_from_json(b.at("lo"), "block.lo");
      block.hi = vector_from_json(b.at("hi"), "block.hi");
      block.weight = get_or(b, "weight", 1.0, "spec.classes[].blocks[]");
      mixture.blocks.push_back(std::move(block));
    }
    spec.classes.push_back(std::move(mixture));
  }
  return spec;
}

}  // namespace

std::string format_double(double x) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), ptr);
}

// --- run configuration -------------------------------------------------------

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  check_keys(doc,
             {"kind", "k", "r", "alpha", "kappa_max", "epsilon", "m", "seed", "mode", "solver",
              "p", "overlap_fraction", "n_per_domain", "splits", "vocab", "anchors_per_class",
              "hide_labels", "naive_dim", "train", "kmeans", "nmf", "sweep"},
             "config");

  cfg.kind = get_or<std::string>(doc, "kind", cfg.kind, "config");
  if (cfg.kind != "block" && cfg.kind != "discrete")
    fail(errc::parse_error, "config.kind must be block or discrete, got '" + cfg.kind + "'");

  cfg.params.k = get_or(doc, "k", cfg.params.k, "config");
  cfg.params.r = get_or(doc, "r", cfg.params.r, "config");
  cfg.params.alpha = get_or(doc, "alpha", cfg.params.alpha, "config");
  cfg.params.kappa_max = get_or(doc, "kappa_max", cfg.params.kappa_max, "config");
  cfg.params.epsilon = get_or(doc, "epsilon", cfg.params.epsilon, "config");
  cfg.params.m = get_or(doc, "m", cfg.params.m, "config");
  cfg.params.seed = get_or(doc, "seed", cfg.params.seed, "config");

  cfg.mode = get_or<std::string>(doc, "mode", cfg.mode, "config");
  cfg.solver = get_or<std::string>(doc, "solver", cfg.solver, "config");
  try {
    parse_pipeline_mode(cfg.mode);
    parse_solver(cfg.solver);
  } catch (const Error& e) {
    fail(errc::parse_error, std::string("config: ") + e.what());
  }

  cfg.p = get_or(doc, "p", cfg.p, "config");
  cfg.overlap_fraction = get_or(doc, "overlap_fraction", cfg.overlap_fraction, "config");
  cfg.n_per_domain = get_or(doc, "n_per_domain", cfg.n_per_domain, "config");
  cfg.vocab = get_or(doc, "vocab", cfg.vocab, "config");
  cfg.anchors_per_class = get_or(doc, "anchors_per_class", cfg.anchors_per_class, "config");
  cfg.hide_labels = get_or(doc, "hide_labels", cfg.hide_labels, "config");
  cfg.naive_dim = get_or(doc, "naive_dim", cfg.naive_dim, "config");

  if (const auto it = doc.find("splits"); it != doc.end()) {
    check_keys(*it, {"train", "valid", "test"}, "config.splits");
    cfg.splits.train = get_or(*it, "train", cfg.splits.train, "config.splits");
    cfg.splits.valid = get_or(*it, "valid", cfg.splits.valid, "config.splits");
    cfg.splits.test = get_or(*it, "test", cfg.splits.test, "config.splits");
  }

  if (const auto it = doc.find("train"); it != doc.end()) {
    check_keys(*it,
               {"arch", "hidden_width", "learning_rate", "lr_decay", "max_epochs", "batch_size",
                "patience", "weight_decay", "standardize"},
               "config.train");
    cfg.train.arch =
        arch_of(get_or<std::string>(*it, "arch", arch_name(cfg.train.arch), "config.train"),
                "config.train.arch");
    cfg.train.hidden_width = get_or(*it, "hidden_width", cfg.train.hidden_width, "config.train");
    cfg.train.learning_rate = get_or(*it, "learning_rate", cfg.train.learning_rate, "config.train");
    cfg.train.lr_decay = get_or(*it, "lr_decay", cfg.train.lr_decay, "config.train");
    cfg.train.max_epochs = get_or(*it, "max_epochs", cfg.train.max_epochs, "config.train");
    cfg.train.batch_size = get_or(*it, "batch_size", cfg.train.batch_size, "config.train");
    cfg.train.patience = get_or(*it, "patience", cfg.train.patience, "config.train");
    cfg.train.weight_decay = get_or(*it, "weight_decay", cfg.train.weight_decay, "config.train");
    cfg.train.standardize = get_or(*it, "standardize", cfg.train.standardize, "config.train");
  }

  if (const auto it = doc.find("kmeans"); it != doc.end()) {
    check_keys(*it, {"niter", "nredo"}, "config.kmeans");
    cfg.kmeans.niter = get_or(*it, "niter", cfg.kmeans.niter, "config.kmeans");
    cfg.kmeans.nredo = get_or(*it, "nredo", cfg.kmeans.nredo, "config.kmeans");
  }

  if (const auto it = doc.find("nmf"); it != doc.end()) {
    check_keys(*it, {"max_iter", "tol", "n_init", "jobs", "stall_window", "stall_rtol", "screen_iter"},
               "config.nmf");
    cfg.nmf.max_iter = get_or(*it, "max_iter", cfg.nmf.max_iter, "config.nmf");
    cfg.nmf.tol = get_or(*it, "tol", cfg.nmf.tol, "config.nmf");
    cfg.nmf.n_init = get_or(*it, "n_init", cfg.nmf.n_init, "config.nmf");
    cfg.nmf.jobs = get_or(*it, "jobs", cfg.nmf.jobs, "config.nmf");
    cfg.nmf.stall_window = get_or(*it, "stall_window", cfg.nmf.stall_window, "config.nmf");
    cfg.nmf.stall_rtol = get_or(*it, "stall_rtol", cfg.nmf.stall_rtol, "config.nmf");
    cfg.nmf.screen_iter = get_or(*it, "screen_iter", cfg.nmf.screen_iter, "config.nmf");
  }

  if (const auto it = doc.find("sweep"); it != doc.end()) {
    check_keys(*it, {"alphas", "kappas", "rs", "ms", "modes", "seeds"}, "config.sweep");
    cfg.sweep.alphas = get_or(*it, "alphas", cfg.sweep.alphas, "config.sweep");
    cfg.sweep.kappas = get_or(*it, "kappas", cfg.sweep.kappas, "config.sweep");
    cfg.sweep.rs = get_or(*it, "rs", cfg.sweep.rs, "config.sweep");
    cfg.sweep.ms = get_or(*it, "ms", cfg.sweep.ms, "config.sweep");
    cfg.sweep.modes = get_or(*it, "modes", cfg.sweep.modes, "config.sweep");
    cfg.sweep.seeds = get_or(*it, "seeds", cfg.sweep.seeds, "config.sweep");
    for (const std::string& mode : cfg.sweep.modes) {
      try {
        parse_pipeline_mode(mode);
      } catch (const Error& e) {
        fail(errc::parse_error, std::string("config.sweep.modes: ") + e.what());
      }
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(load_json_file(path)); }

json resolved_config_json(const RunConfig& cfg) {
  const SweepGrid grid = sweep_grid(cfg);
  std::vector<std::string> modes;
  modes.reserve(grid.modes.size());
  for (PipelineMode mode : grid.modes) modes.push_back(to_string(mode));
  return {
      {"kind", cfg.kind},
      {"k", cfg.params.k},
      {"r", cfg.params.r},
      {"alpha", cfg.params.alpha},
      {"kappa_max", cfg.params.kappa_max},
      {"epsilon", cfg.params.epsilon},
      {"m", cfg.params.m},
      {"seed", cfg.params.seed},
      {"mode", cfg.mode},
      {"solver", cfg.solver},
      {"p", cfg.p},
      {"overlap_fraction", cfg.overlap_fraction},
      {"n_per_domain", cfg.n_per_domain},
      {"splits",
       {{"train", cfg.splits.train}, {"valid", cfg.splits.valid}, {"test", cfg.splits.test}}},
      {"vocab", cfg.vocab},
      {"anchors_per_class", cfg.anchors_per_class},
      {"hide_labels", cfg.hide_labels},
      {"naive_dim", cfg.naive_dim},
      {"train",
       {{"arch", arch_name(cfg.train.arch)},
        {"hidden_width", cfg.train.hidden_width},
        {"learning_rate", cfg.train.learning_rate},
        {"lr_decay", cfg.train.lr_decay},
        {"max_epochs", cfg.train.max_epochs},
        {"batch_size", cfg.train.batch_size},
        {"patience", cfg.train.patience},
        {"weight_decay", cfg.train.weight_decay},
        {"standardize", cfg.train.standardize}}},
      {"kmeans", {{"niter", cfg.kmeans.niter}, {"nredo", cfg.kmeans.nredo}}},
      {"nmf",
       {{"max_iter", cfg.nmf.max_iter},
        {"tol", cfg.nmf.tol},
        {"n_init", cfg.nmf.n_init},
        {"jobs", cfg.nmf.jobs},
        {"stall_window", cfg.nmf.stall_window},
        {"stall_rtol", cfg.nmf.stall_rtol},
        {"screen_iter", cfg.nmf.screen_iter}}},
      {"sweep",
       {{"alphas", grid.alphas},
        {"kappas", grid.kappas},
        {"rs", grid.rs},
        {"ms", grid.ms},
        {"modes", modes},
        {"seeds", grid.seeds}}},
  };
}

BlockInstanceConfig block_instance_config(const RunConfig& cfg) {
  BlockInstanceConfig out;
  out.params = cfg.params;
  out.p = cfg.p;
  out.overlap_fraction = cfg.overlap_fraction;
  out.n_per_domain = cfg.n_per_domain;
  out.splits = cfg.splits;
  return out;
}

DiscreteInstanceConfig discrete_instance_config(const RunConfig& cfg) {
  DiscreteInstanceConfig out;
  out.params = cfg.params;
  out.vocab = cfg.vocab;
  out.anchors_per_class = cfg.anchors_per_class;
  out.n_per_domain = cfg.n_per_domain;
  out.splits = cfg.splits;
  return out;
}

PipelineConfig pipeline_config(const RunConfig& cfg) {
  PipelineConfig out;
  out.m = cfg.params.m;
  out.solver = parse_solver(cfg.solver);
  out.train = cfg.train;
  out.kmeans = cfg.kmeans;
  out.nmf = cfg.nmf;
  out.naive_dim = cfg.naive_dim;
  out.seed = cfg.params.seed;
  return out;
}

SweepGrid sweep_grid(const RunConfig& cfg) {
  SweepGrid grid;
  grid.alphas = cfg.sweep.alphas.empty() ? std::vector<double>{cfg.params.alpha} : cfg.sweep.alphas;
  grid.kappas =
      cfg.sweep.kappas.empty() ? std::vector<double>{cfg.params.kappa_max} : cfg.sweep.kappas;
  grid.rs = cfg.sweep.rs.empty() ? std::vector<int>{cfg.params.r} : cfg.sweep.rs;
  grid.ms = cfg.sweep.ms.empty() ? std::vector<int>{cfg.params.m} : cfg.sweep.ms;
  grid.modes.clear();
  if (cfg.sweep.modes.empty())
    grid.modes.push_back(parse_pipeline_mode(cfg.mode));
  else
    for (const std::string& mode : cfg.sweep.modes) grid.modes.push_back(parse_pipeline_mode(mode));
  grid.seeds =
      cfg.sweep.seeds.empty() ? std::vector<std::uint64_t>{cfg.params.seed} : cfg.sweep.seeds;
  grid.k = cfg.params.k;
  grid.epsilon = cfg.params.epsilon;
  grid.overlap_fraction = cfg.overlap_fraction;
  grid.p = cfg.p;
  grid.n_per_domain = cfg.n_per_domain;
  grid.splits = cfg.splits;
  return grid;
}

// --- dataset CSV ---------------------------------------------------------------

void write_dataset_csv(const std::string& path, const DomainDataset& data, bool hide_labels) {
  std::ostringstream out;
  out << "split,domain,label";
  for (int j = 0; j < data.p; ++j) out << ",x" << j;
  out << '\n';
  for (const DataRecord& rec : data.records) {
    out << split_name(rec.split) << ',' << rec.domain << ','
        << (hide_labels ? kHiddenLabel : rec.label);
    for (int j = 0; j < data.p; ++j) out << ',' << format_double(rec.x(j));
    out << '\n';
  }
  write_text_file(path, out.str());
}

DomainDataset read_dataset_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  long line_no = 0;

  if (!std::getline(in, line)) fail(errc::parse_error, path + " is empty");
  ++line_no;
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "split" || header[1] != "domain" || header[2] != "label")
    fail_line(line_no, "dataset header must start with split,domain,label");
  const int p = static_cast<int>(header.size()) - 3;
  for (int j = 0; j < p; ++j)
    if (header[static_cast<size_t>(j) + 3] != "x" + std::to_string(j))
      fail_line(line_no, "feature columns must be named x0..x" + std::to_string(p - 1));

  DomainDataset data;
  data.p = p;
  int max_domain = -1;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tokens = split_csv_line(line);
    if (tokens.size() != header.size())
      fail_line(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(tokens.size()));
    DataRecord rec;
    rec.split = split_of(tokens[0], line_no);
    rec.domain = static_cast<int>(parse_int_token(tokens[1], line_no));
    rec.label = static_cast<int>(parse_int_token(tokens[2], line_no));
    if (rec.domain < 0) fail_line(line_no, "domain must be non-negative");
    if (rec.label < kHiddenLabel) fail_line(line_no, "label must be >= -1");
    rec.x = Vector(p);
    for (int j = 0; j < p; ++j) rec.x(j) = parse_double_token(tokens[static_cast<size_t>(j) + 3], line_no);
    max_domain = std::max(max_domain, rec.domain);
    max_label = std::max(max_label, rec.label);
    data.records.push_back(std::move(rec));
  }
  if (data.records.empty()) fail(errc::parse_error, path + " has no data rows");
  data.r = max_domain + 1;
  data.k = max_label + 1;
  return data;
}

// --- ground truth ----------------------------------------------------------------

json ground_truth_json(const ProblemInstance& instance, const json& config) {
  json j{{"k", instance.params.k},
         {"r", instance.params.r},
         {"alpha", instance.params.alpha},
         {"kappa_max", instance.params.kappa_max},
         {"epsilon", instance.params.epsilon},
         {"seed", instance.params.seed},
         {"q_yd", matrix_json(instance.q_yd.mat())}};
  if (instance.spec) j["spec"] = mixture_spec_json(*instance.spec);
  if (instance.q_xy) j["q_xy"] = matrix_json(instance.q_xy->mat());
  if (!config.is_null()) j["config"] = config;
  return j;
}

ProblemInstance instance_from_truth(const json& truth, DomainDataset data) {
  check_keys(truth, {"k", "r", "alpha", "kappa_max", "epsilon", "seed", "q_yd", "spec", "q_xy", "config"},
             "truth");
  ProblemParams params;
  params.k = get_or(truth, "k", 0, "truth");
  params.r = get_or(truth, "r", 0, "truth");
  params.alpha = get_or(truth, "alpha", 1.0, "truth");
  params.kappa_max = get_or(truth, "kappa_max", 10.0, "truth");
  params.epsilon = get_or(truth, "epsilon", 0.1, "truth");
  params.seed = get_or<std::uint64_t>(truth, "seed", 0, "truth");
  if (truth.find("q_yd") == truth.end()) fail(errc::parse_error, "truth is missing q_yd");
  const Matrix q = matrix_from_json(truth.at("q_yd"), "truth.q_yd");
  if (q.rows() != params.k || q.cols() != params.r)
    fail(errc::parse_error, "truth.q_yd shape disagrees with k and r");

  std::optional<MixtureSpec> spec;
  std::optional<StochasticMatrix> q_xy;
  if (const auto it = truth.find("spec"); it != truth.end()) spec = mixture_spec_from_json(*it);
  if (const auto it = truth.find("q_xy"); it != truth.end())
    q_xy = StochasticMatrix(matrix_from_json(*it, "truth.q_xy"));

  for (const DataRecord& rec : data.records) {
    if (rec.domain >= params.r) fail(errc::parse_error, "dataset domain outside truth's r");
    if (rec.label >= params.k) fail(errc::parse_error, "dataset label outside truth's k");
  }
  data.k = params.k;
  data.r = params.r;
  return ProblemInstance{params, StochasticMatrix(q), std::move(spec), std::move(q_xy),
                         std::move(data)};
}

ProblemInstance blind_instance(DomainDataset data, int k) {
  if (k < 1) fail(errc::invalid_input, "class count must be >= 1");
  if (data.records.empty()) fail(errc::invalid_input, "dataset is empty");
  for (const DataRecord& rec : data.records)
    if (rec.label >= k)
      fail(errc::invalid_input,
           "dataset carries label " + std::to_string(rec.label) +
               " but the config says k = " + std::to_string(k));
  ProblemParams params;
  params.k = k;
  params.r = data.r;
  data.k = k;
  const Matrix uniform = Matrix::Constant(k, data.r, 1.0 / static_cast<double>(k));
  return ProblemInstance{params, StochasticMatrix(uniform), std::nullopt, std::nullopt,
                         std::move(data)};
}

// --- discriminator model -----------------------------------------------------------

json discriminator_json(const DiscriminatorModel& model, const json& config) {
  json j{{"arch", arch_name(model.arch)},
         {"input_dim", model.input_dim},
         {"output_dim", model.output_dim},
         {"hidden_width", model.hidden_width},
         {"feature_mean", vector_json(model.feature_mean)},
         {"feature_scale", vector_json(model.feature_scale)},
         {"w2", matrix_json(model.w2)},
         {"b2", vector_json(model.b2)}};
  if (model.arch == Arch::one_hidden_layer) {
    j["w1"] = matrix_json(model.w1);
    j["b1"] = vector_json(model.b1);
  }
  if (!config.is_null()) j["config"] = config;
  return j;
}

DiscriminatorModel discriminator_from_json(const json& doc) {
  check_keys(doc,
             {"arch", "input_dim", "output_dim", "hidden_width", "feature_mean", "feature_scale",
              "w1", "b1", "w2", "b2", "config"},
             "model");
  DiscriminatorModel model;
  model.arch = arch_of(get_or<std::string>(doc, "arch", "softmax_linear", "model"), "model.arch");
  model.input_dim = get_or(doc, "input_dim", 0, "model");
  model.output_dim = get_or(doc, "output_dim", 0, "model");
  model.hidden_width = get_or(doc, "hidden_width", 0, "model");
  model.feature_mean = vector_from_json(doc.at("feature_mean"), "model.feature_mean");
  model.feature_scale = vector_from_json(doc.at("feature_scale"), "model.feature_scale");
  model.w2 = matrix_from_json(doc.at("w2"), "model.w2");
  model.b2 = vector_from_json(doc.at("b2"), "model.b2");
  if (model.arch == Arch::one_hidden_layer) {
    model.w1 = matrix_from_json(doc.at("w1"), "model.w1");
    model.b1 = vector_from_json(doc.at("b1"), "model.b1");
  }
  return model;
}

void write_loss_curve_csv(const std::string& path, const std::vector<LossCurvePoint>& curve) {
  std::ostringstream out;
  out << "epoch,train_loss,valid_loss\n";
  for (const LossCurvePoint& pt : curve)
    out << pt.epoch << ',' << format_double(pt.train_loss) << ',' << format_double(pt.valid_loss)
        << '\n';
  write_text_file(path, out.str());
}

json factors_json(const FactorizationResult& factors, const json& config) {
  json j{{"w", matrix_json(factors.w.mat())},
         {"h", matrix_json(factors.h.mat())},
         {"residual", factors.residual},
         {"converged", factors.converged},
         {"iterations", factors.iterations}};
  if (!config.is_null()) j["config"] = config;
  return j;
}

void write_predictions_csv(const std::string& path, const std::vector<int>& record_index,
                           const std::vector<int>& domains,
                           const std::vector<Prediction>& predictions) {
  if (record_index.size() != predictions.size() || domains.size() != predictions.size())
    fail(errc::shape_mismatch, "prediction columns have different lengths");
  if (predictions.empty()) fail(errc::invalid_input, "no predictions to write");
  const int k = predictions.front().q_y_given_x_d.dim();
  std::ostringstream out;
  out << "index,domain,y_pred";
  for (int y = 1; y <= k; ++y) out << ",q" << y;
  out << '\n';
  for (size_t i = 0; i < predictions.size(); ++i) {
    out << record_index[i] << ',' << domains[i] << ',' << predictions[i].y_pred;
    for (int y = 0; y < k; ++y) out << ',' << format_double(predictions[i].q_y_given_x_d[y]);
    out << '\n';
  }
  write_text_file(path, out.str());
}

void write_clusters_csv(const std::string& path, const std::vector<int>& record_index,
                        const std::vector<int>& cluster_ids, const std::vector<int>& domains) {
  if (record_index.size() != cluster_ids.size() || domains.size() != cluster_ids.size())
    fail(errc::shape_mismatch, "cluster columns have different lengths");
  std::ostringstream out;
  out << "index,cluster,domain\n";
  for (size_t i = 0; i < cluster_ids.size(); ++i)
    out << record_index[i] << ',' << cluster_ids[i] << ',' << domains[i] << '\n';
  write_text_file(path, out.str());
}

// --- reports ---------------------------------------------------------------------

json report_json(const EvalReport& report, const json& config) {
  json j{{"mode", report.mode},       {"k", report.k},
         {"r", report.r},             {"m", report.m},
         {"n_test", report.n_test},   {"seed", report.seed},
         {"label_metrics", report.label_metrics},
         {"truth_metrics", report.truth_metrics},
         {"q_yd_hat", matrix_json(report.q_yd_hat)},
         {"nmf",
          {{"residual", report.nmf_residual},
           {"converged", report.nmf_converged},
           {"iterations", report.nmf_iterations}}}};
  if (report.label_metrics) {
    j["accuracy"] = report.accuracy;
    j["balanced_accuracy"] = report.balanced_accuracy;
    j["permutation"] = report.permutation;
    json conf = json::array();
    for (int t = 0; t < report.confusion.rows(); ++t) {
      json row = json::array();
      for (int p = 0; p < report.confusion.cols(); ++p) row.push_back(report.confusion(t, p));
      conf.push_back(std::move(row));
    }
    j["confusion"] = std::move(conf);
    json dom = json::array();
    for (int d = 0; d < report.per_domain_accuracy.size(); ++d)
      dom.push_back(report.per_domain_accuracy(d));
    j["per_domain_accuracy"] = std::move(dom);
  } else {
    j["note"] = "no labels: metrics omitted";
  }
  if (report.truth_metrics) j["q_yd_error"] = report.q_yd_err;
  if (!config.is_null()) j["config"] = config;
  return j;
}

json timings_json(const EvalReport& report) {
  json stages = json::array();
  for (const StageTiming& t : report.timings)
    stages.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  return {{"mode", report.mode}, {"seed", report.seed}, {"timings", std::move(stages)}};
}

std::string reports_jsonl(const SweepResult& result, const json& config) {
  std::ostringstream out;
  out << json{{"config", config}}.dump() << '\n';
  for (const SweepRun& run : result.runs) {
    json j{{"alpha", run.alpha}, {"kappa", run.kappa}, {"r", run.r},
           {"m", run.m},         {"mode", run.mode},   {"seed", run.seed},
           {"ok", run.report.has_value()}};
    if (run.report)
      j["report"] = report_json(*run.report, json());
    else
      j["error"] = run.error;
    out << j.dump() << '\n';
  }
  return out.str();
}

std::string summary_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "alpha,kappa,r,m,mode,acc_mean,acc_std,qyd_err_mean,qyd_err_std\n";
  for (const SweepRow& row : result.rows)
    out << format_double(row.alpha) << ',' << format_double(row.kappa) << ',' << row.r << ','
        << row.m << ',' << row.mode << ',' << format_double(row.acc_mean) << ','
        << format_double(row.acc_std) << ',' << format_double(row.qyd_err_mean) << ','
        << format_double(row.qyd_err_std) << '\n';
  return out.str();
}

// --- file helpers -------------------------------------------------------------------

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_error, "cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) fail(errc::io_error, "write to " + path + " failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(errc::io_error, "read from " + path + " failed");
  return buf.str();
}

json load_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(errc::parse_error, path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

}  // namespace lls
