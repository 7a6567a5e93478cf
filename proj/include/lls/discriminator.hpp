#pragma once

#include <cstdint>
#include <vector>

#include "lls/core.hpp"
#include "lls/synthgen.hpp"

namespace lls {

// ---------------------------------------------------------------------------
// Domain discriminator: multinomial model of q(d | x) trained by cross-entropy.
// The population minimizer of this loss is exactly the domain posterior, which
// is what the rest of the pipeline consumes. Softmax-linear is the default;
// a one-hidden-layer rectifier network handles block layouts whose posteriors
// are piecewise constant in the inputs.
// ---------------------------------------------------------------------------

enum class Arch { softmax_linear, one_hidden_layer };

struct DiscriminatorModel {
  Arch arch = Arch::softmax_linear;
  int input_dim = 0;
  int output_dim = 0;
  int hidden_width = 0;

  // Input standardization folded into the model so serialized weights are
  // self-contained.
  Vector feature_mean;
  Vector feature_scale;

  Matrix w1;  // hidden x input (one_hidden_layer only)
  Vector b1;
  Matrix w2;  // output x hidden, or output x input for softmax_linear
  Vector b2;

  Vector logits(const Vector& x) const;
  SimplexVec predict(const Vector& x) const;
  Matrix predict_rows(const Matrix& x) const;  // one softmax row per input row
};

DiscriminatorModel init_model(Arch arch, int input_dim, int output_dim, int hidden_width,
                              std::uint64_t seed);

// Numerically stable softmax; invariant to adding a constant to all logits.
Vector softmax(const Vector& logits);

// Mean negative log-likelihood of the targets under row-wise predictions,
// with probabilities clamped at 1e-12.
double cross_entropy(const Matrix& predictions, const std::vector<int>& targets);

// Flat parameter vector in a fixed order (w1, b1, w2, b2); the gradient from
// batch_loss_and_grad uses the same order.
Vector flatten_params(const DiscriminatorModel& model);
void unflatten_params(DiscriminatorModel& model, const Vector& theta);

// Mean cross-entropy over the batch plus (weight_decay / 2) * ||W||^2 on the
// weight matrices (biases are not decayed). If grad is non-null it receives
// the analytic gradient in flattened order.
double batch_loss_and_grad(const DiscriminatorModel& model, const Matrix& x,
                           const std::vector<int>& targets, double weight_decay, Vector* grad);

struct TrainConfig {
  Arch arch = Arch::softmax_linear;
  int hidden_width = 64;
  double learning_rate = 0.05;
  double lr_decay = 0.97;  // per-epoch exponential decay
  int max_epochs = 200;
  int batch_size = 128;
  int patience = 10;  // epochs without validation improvement before stopping
  double weight_decay = 0.0;
  bool standardize = true;
  std::uint64_t seed = 0;
};

struct LossCurvePoint {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct TrainResult {
  DiscriminatorModel model;  // parameters of the best validation epoch
  std::vector<LossCurvePoint> curve;
  int best_epoch = 0;
  double best_valid_loss = 0.0;
};

// Mini-batch gradient descent with seeded shuffling, exponential learning-rate
// decay, and early stopping on validation loss. Deterministic given the seed.
TrainResult train_discriminator(const UnlabeledView& train, const UnlabeledView& valid,
                                const TrainConfig& cfg);

}  // namespace lls
