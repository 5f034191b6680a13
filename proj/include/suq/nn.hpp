/*
 * Copyright 2026 The suq Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Minimal feed-forward classifier with hand-written backpropagation.
//
// A Network is a flat list of layers. Stochastic layers (dropout and the
// Flipout variational dense layer) draw their noise from an explicit Rng and
// can record it on a ForwardTape; a tape with frozen_noise set replays the
// recorded noise, which is what makes finite-difference checks of the
// variational layers possible.

#ifndef SUQ_NN_HPP_
#define SUQ_NN_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "suq/common.hpp"

namespace suq::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

enum class Mode {
  kEval,   // dropout off, variational layers use their means
  kTrain,  // dropout on, variational weights sampled (also used for MC inference)
};

// Fixed input normalization, (x - mean) * inv_std. Not trained.
struct StandardizeLayer {
  RowVector mean;
  RowVector inv_std;
};

struct DenseLayer {
  Matrix weights;  // out x in
  RowVector bias;  // out
};

// Gaussian mean-field posterior over weights and biases; sigma = softplus(rho).
struct VariationalDenseLayer {
  Matrix weight_mean;
  Matrix weight_rho;
  RowVector bias_mean;
  RowVector bias_rho;
  double prior_weight = 1.0;
};

struct ReluLayer {};

struct DropoutSpec {
  double p = 0.0;
};

using Layer = std::variant<StandardizeLayer, DenseLayer, VariationalDenseLayer, ReluLayer,
                           DropoutSpec>;

double softplus(double x);
double sigmoid(double x);
double inverse_softplus(double y);

Matrix softmax_rows(const Matrix& logits);

// Mean over the batch of -log p(true class), with log terms floored at
// kProbabilityFloor.
inline constexpr double kProbabilityFloor = 1e-12;
double cross_entropy_loss(const Matrix& probs, std::span<const int> labels);

// Sum over elements of KL(N(mu, sigma^2) || N(0, 1)).
double kl_gaussian_to_standard_normal(std::span<const double> mu, std::span<const double> sigma);

// ce + beta * kl_total / batches_per_epoch.
double elbo_loss(double ce, double kl_total, double beta, int batches_per_epoch);

// Noise of one Flipout forward: a perturbation shared by the batch plus
// per-example Rademacher signs on the input and output side.
struct FlipoutNoise {
  Matrix perturbation;  // out x in, standard normal
  Matrix sign_in;       // batch x in, +-1
  Matrix sign_out;      // batch x out, +-1
  RowVector bias_noise; // out, standard normal
};

FlipoutNoise sample_flipout_noise(Eigen::Index batch, Eigen::Index in, Eigen::Index out, Rng& rng);

// x mu^T + ((x .* s_in)(sigma .* E)^T) .* s_out + b_mu + b_sigma .* e_b.
// sigma == 0 is accepted and reduces to the deterministic layer exactly.
Matrix flipout_forward(const Matrix& x, const Matrix& weight_mean, const Matrix& weight_sigma,
                       const RowVector& bias_mean, const RowVector& bias_sigma,
                       const FlipoutNoise& noise);
Matrix flipout_forward(const Matrix& x, const Matrix& weight_mean, const Matrix& weight_sigma,
                       const RowVector& bias_mean, const RowVector& bias_sigma, Rng& rng);

// Inverted dropout. In eval mode, or with p == 0, the input is returned
// unchanged. When mask_out is given it receives the applied multiplier.
Matrix dropout_forward(const DropoutSpec& spec, const Matrix& x, Mode mode, Rng* rng,
                       Matrix* mask_out = nullptr);

struct LayerTape {
  Matrix input;
  Matrix mask;
  FlipoutNoise noise;
};

struct ForwardTape {
  std::vector<LayerTape> layers;
  Matrix probs;
  // Replay the noise recorded by the previous forward instead of drawing.
  bool frozen_noise = false;
};

// Gradient buffers laid out like Network::parameters().
using Gradients = std::vector<std::vector<double>>;

struct MlpSpec {
  enum class Kind { kDeterministic, kDropout, kVariational };

  int input_width = 8;
  std::vector<int> hidden = {64, 64};
  int classes = 2;
  Kind kind = Kind::kDeterministic;
  double dropout_p = 0.3;     // kDropout: inserted after every hidden activation
  double prior_weight = 1.0;  // kVariational
  double initial_sigma = 1e-2;
  // Optional input standardization; empty means none.
  RowVector input_mean;
  RowVector input_std;
};

class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers);

  static Network make_mlp(const MlpSpec& spec, Rng& rng);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }

  int input_width() const;
  int output_width() const;
  bool has_dropout() const;  // any dropout layer, including p == 0
  bool has_variational() const;

  // Returns class probabilities (softmax of the last layer). Train mode with
  // stochastic layers needs rng unless the tape replays frozen noise.
  Matrix forward(const Matrix& x, Mode mode, Rng* rng, ForwardTape* tape = nullptr) const;

  // Gradient of cross_entropy + kl_scale * weighted_kl() with respect to
  // parameters(), using the activations and noise recorded on the tape.
  Gradients backward(const ForwardTape& tape, std::span<const int> labels,
                     double kl_scale) const;

  // Sum over variational layers of prior_weight * KL.
  double weighted_kl() const;

  std::vector<std::span<double>> parameters();
  std::size_t parameter_count() const;

  friend bool operator==(const Network& a, const Network& b);

 private:
  void validate() const;
  std::vector<Layer> layers_;
};

// Training objective evaluated the same way backward() differentiates it.
double objective(const Network& net, const Matrix& x, std::span<const int> labels, Mode mode,
                 Rng* rng, ForwardTape* tape, double kl_scale);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  Gradients first_moment;
  Gradients second_moment;

  void apply(std::vector<std::span<double>> params, const Gradients& grads, double lr);
};

// Multiplies the learning rate by factor once the monitored loss has gone
// patience consecutive epochs without strictly improving on its best value.
class PlateauScheduler {
 public:
  PlateauScheduler(double learning_rate, int patience, double factor);

  // Feeds one epoch's validation loss; returns true if the rate was reduced.
  bool step(double val_loss);
  double learning_rate() const { return lr_; }
  int reductions() const { return reductions_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double best_;
  int bad_epochs_ = 0;
  int reductions_ = 0;
};

struct LabeledData {
  Matrix features;
  std::vector<int> labels;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  int plateau_patience = 3;
  double plateau_factor = 0.1;
  int max_epochs = 100;
  std::uint64_t seed = 0;
  bool class_balanced = true;
  // Applied to every training batch (train-time augmentation); optional.
  std::function<void(Matrix&, Rng&)> augment;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;
  bool lr_reduced = false;
};

struct TrainResult {
  Network network;  // snapshot with the best validation accuracy
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

// Mini-batch Adam with the plateau schedule. Throws NumericError on a
// non-finite loss.
TrainResult train(Network network, const LabeledData& train_set, const LabeledData& val_set,
                  const TrainConfig& config);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  double analytic_norm = 0.0;
  std::size_t checked = 0;
};

// Central finite differences against backward(). Stochastic layers sample
// their noise once and keep it frozen for every perturbed evaluation.
GradientCheckResult gradient_check(Network net, const Matrix& x, std::span<const int> labels,
                                   double epsilon, Rng& rng, double kl_scale = 0.0);

std::vector<int> argmax_rows(const Matrix& probs);

// Checkpoints: text blob starting with the "SUQNET1" magic line.
void save_network(const Network& net, std::ostream& out);
Network load_network(std::istream& in);

}  // namespace suq::nn

#endif  // SUQ_NN_HPP_
