#include "lls/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lls/rng.hpp"

namespace lls {

namespace {

constexpr double kProbClamp = 1e-12;

Vector standardized(const DiscriminatorModel& m, const Vector& x) {
  return (x - m.feature_mean).cwiseQuotient(m.feature_scale);
}

void check_input(const DiscriminatorModel& m, Eigen::Index dim) {
  if (dim != m.input_dim) fail(errc::shape_mismatch, "input dimension differs from model");
}

}  // namespace

Vector softmax(const Vector& logits) {
  const double zmax = logits.maxCoeff();
  Vector e = (logits.array() - zmax).exp();
  return e / e.sum();
}

Vector DiscriminatorModel::logits(const Vector& x) const {
  check_input(*this, x.size());
  const Vector z = standardized(*this, x);
  if (arch == Arch::softmax_linear) return w2 * z + b2;
  const Vector h = (w1 * z + b1).cwiseMax(0.0);
  return w2 * h + b2;
}

SimplexVec DiscriminatorModel::predict(const Vector& x) const {
  return SimplexVec::proportional(softmax(logits(x)));
}

Matrix DiscriminatorModel::predict_rows(const Matrix& x) const {
  Matrix out(x.rows(), output_dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out.row(i) = softmax(logits(x.row(i).transpose())).transpose();
  return out;
}

DiscriminatorModel init_model(Arch arch, int input_dim, int output_dim, int hidden_width,
                              std::uint64_t seed) {
  if (input_dim < 1 || output_dim < 1) fail(errc::invalid_input, "model dims must be >= 1");
  DiscriminatorModel m;
  m.arch = arch;
  m.input_dim = input_dim;
  m.output_dim = output_dim;
  m.feature_mean = Vector::Zero(input_dim);
  m.feature_scale = Vector::Ones(input_dim);
  if (arch == Arch::softmax_linear) {
    // Convex objective; the zero start predicts uniformly and is deterministic.
    m.hidden_width = 0;
    m.w1.resize(0, 0);
    m.b1.resize(0);
    m.w2 = Matrix::Zero(output_dim, input_dim);
    m.b2 = Vector::Zero(output_dim);
    return m;
  }
  if (hidden_width < 1) fail(errc::invalid_input, "hidden width must be >= 1");
  m.hidden_width = hidden_width;
  auto rng = make_rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  m.w1.resize(hidden_width, input_dim);
  const double s1 = std::sqrt(2.0 / input_dim);
  for (int i = 0; i < hidden_width; ++i)
    for (int j = 0; j < input_dim; ++j) m.w1(i, j) = s1 * n01(rng);
  m.b1 = Vector::Zero(hidden_width);
  m.w2.resize(output_dim, hidden_width);
  const double s2 = std::sqrt(1.0 / hidden_width);
  for (int i = 0; i < output_dim; ++i)
    for (int j = 0; j < hidden_width; ++j) m.w2(i, j) = s2 * n01(rng);
  m.b2 = Vector::Zero(output_dim);
  return m;
}

double cross_entropy(const Matrix& predictions, const std::vector<int>& targets) {
  if (predictions.rows() != static_cast<Eigen::Index>(targets.size()))
    fail(errc::shape_mismatch, "prediction rows differ from target count");
  if (predictions.rows() == 0) fail(errc::invalid_input, "empty prediction batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
    const int t = targets[i];
    if (t < 0 || t >= predictions.cols())
      fail(errc::invalid_input, "target " + std::to_string(t) + " out of range");
    total += -std::log(std::max(predictions(i, t), kProbClamp));
  }
  return total / static_cast<double>(predictions.rows());
}

Vector flatten_params(const DiscriminatorModel& model) {
  const Eigen::Index n = model.w1.size() + model.b1.size() + model.w2.size() + model.b2.size();
  Vector theta(n);
  Eigen::Index at = 0;
  auto put = [&](const auto& block) {
    for (Eigen::Index i = 0; i < block.size(); ++i) theta(at++) = block(i);
  };
  put(model.w1.reshaped());
  put(model.b1);
  put(model.w2.reshaped());
  put(model.b2);
  return theta;
}

void unflatten_params(DiscriminatorModel& model, const Vector& theta) {
  const Eigen::Index n = model.w1.size() + model.b1.size() + model.w2.size() + model.b2.size();
  if (theta.size() != n) fail(errc::shape_mismatch, "parameter vector size differs from model");
  Eigen::Index at = 0;
  auto take = [&](auto&& block) {
    for (Eigen::Index i = 0; i < block.size(); ++i) block(i) = theta(at++);
  };
  take(model.w1.reshaped());
  take(model.b1);
  take(model.w2.reshaped());
  take(model.b2);
}

double batch_loss_and_grad(const DiscriminatorModel& model, const Matrix& x,
                           const std::vector<int>& targets, double weight_decay, Vector* grad) {
  check_input(model, x.cols());
  if (x.rows() != static_cast<Eigen::Index>(targets.size()))
    fail(errc::shape_mismatch, "batch rows differ from target count");
  const Eigen::Index n = x.rows();
  if (n == 0) fail(errc::invalid_input, "empty batch");

  // Standardize once for the whole batch.
  Matrix z(n, model.input_dim);
  for (Eigen::Index i = 0; i < n; ++i)
    z.row(i) = (x.row(i).transpose() - model.feature_mean)
                   .cwiseQuotient(model.feature_scale)
                   .transpose();

  const bool hidden = model.arch == Arch::one_hidden_layer;
  Matrix pre, act;
  if (hidden) {
    pre = z * model.w1.transpose();
    pre.rowwise() += model.b1.transpose();
    act = pre.cwiseMax(0.0);
  } else {
    act = z;
  }
  Matrix logits = act * model.w2.transpose();
  logits.rowwise() += model.b2.transpose();

  double loss = 0.0;
  Matrix dlogits(n, model.output_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = targets[i];
    if (t < 0 || t >= model.output_dim)
      fail(errc::invalid_input, "target " + std::to_string(t) + " out of range");
    const Vector p = softmax(logits.row(i).transpose());
    loss += -std::log(std::max(p(t), kProbClamp));
    dlogits.row(i) = p.transpose();
    dlogits(i, t) -= 1.0;
  }
  loss /= static_cast<double>(n);
  if (weight_decay > 0.0)
    loss += 0.5 * weight_decay *
            (model.w1.squaredNorm() + model.w2.squaredNorm());
  if (!grad) return loss;

  dlogits /= static_cast<double>(n);
  DiscriminatorModel g = model;  // reuse shapes for the gradient blocks
  g.w2 = dlogits.transpose() * act;
  g.b2 = dlogits.colwise().sum().transpose();
  if (hidden) {
    Matrix dact = dlogits * model.w2;
    Matrix dpre = (pre.array() > 0.0).select(dact, 0.0);
    g.w1 = dpre.transpose() * z;
    g.b1 = dpre.colwise().sum().transpose();
  }
  if (weight_decay > 0.0) {
    g.w1 += weight_decay * model.w1;
    g.w2 += weight_decay * model.w2;
  }
  *grad = flatten_params(g);
  return loss;
}

TrainResult train_discriminator(const UnlabeledView& train, const UnlabeledView& valid,
                                const TrainConfig& cfg) {
  if (train.x.rows() == 0 || valid.x.rows() == 0)
    fail(errc::invalid_input, "train and validation views must be non-empty");
  if (train.r < 1) fail(errc::invalid_input, "view is missing its domain count");
  if (valid.r != train.r || valid.p != train.p)
    fail(errc::shape_mismatch, "validation view shape differs from train view");
  if (cfg.learning_rate <= 0.0 || cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.patience < 1 ||
      cfg.lr_decay <= 0.0 || cfg.lr_decay > 1.0)
    fail(errc::invalid_input, "bad training configuration");

  DiscriminatorModel model =
      init_model(cfg.arch, train.p, train.r, cfg.hidden_width, derive_seed(cfg.seed, 1));
  if (cfg.standardize) {
    model.feature_mean = train.x.colwise().mean().transpose();
    Vector var = (train.x.rowwise() - model.feature_mean.transpose())
                     .array()
                     .square()
                     .colwise()
                     .mean()
                     .transpose();
    model.feature_scale = var.array().sqrt().max(1e-12).matrix();
    for (int j = 0; j < train.p; ++j)
      if (model.feature_scale(j) < 1e-8) model.feature_scale(j) = 1.0;
  }

  Vector theta = flatten_params(model);
  auto rng = make_rng(derive_seed(cfg.seed, 2));
  std::vector<int> order(static_cast<size_t>(train.x.rows()));
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.best_valid_loss = std::numeric_limits<double>::infinity();
  int stale = 0;
  Vector grad;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    Eigen::Index seen = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const Eigen::Index b =
          std::min<Eigen::Index>(cfg.batch_size, static_cast<Eigen::Index>(order.size() - start));
      Matrix bx(b, train.p);
      std::vector<int> bt(static_cast<size_t>(b));
      for (Eigen::Index i = 0; i < b; ++i) {
        bx.row(i) = train.x.row(order[start + i]);
        bt[i] = train.domains[order[start + i]];
      }
      const double loss = batch_loss_and_grad(model, bx, bt, cfg.weight_decay, &grad);
      if (!std::isfinite(loss))
        fail(errc::training_diverged, "non-finite loss at epoch " + std::to_string(epoch),
             epoch);
      epoch_loss += loss * static_cast<double>(b);
      seen += b;
      theta -= lr * grad;
      unflatten_params(model, theta);
    }
    const double train_loss = epoch_loss / static_cast<double>(seen);
    const double valid_loss = cross_entropy(model.predict_rows(valid.x), valid.domains);
    if (!std::isfinite(valid_loss))
      fail(errc::training_diverged, "non-finite validation loss at epoch " + std::to_string(epoch),
           epoch);
    result.curve.push_back({epoch, train_loss, valid_loss});
    if (valid_loss < result.best_valid_loss) {
      result.best_valid_loss = valid_loss;
      result.best_epoch = epoch;
      result.model = model;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  if (!std::isfinite(result.best_valid_loss))
    fail(errc::training_diverged, "validation loss never became finite");
  return result;
}

}  // namespace lls
