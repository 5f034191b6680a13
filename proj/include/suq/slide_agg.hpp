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

// Slide-level prediction: confidence-map stitching, top-q tile aggregation
// and a gated-attention multiple-instance head.

#ifndef SUQ_SLIDE_AGG_HPP_
#define SUQ_SLIDE_AGG_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "suq/methods.hpp"
#include "suq/nn.hpp"

namespace suq::slide {

inline constexpr double kSentinel = -1.0;

struct ConfidenceMap {
  std::int64_t slide_id = 0;
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, kSentinel where no tile exists

  double at(int x, int y) const { return values.at(static_cast<std::size_t>(y) * width + x); }
};

ConfidenceMap stitch_confidence_map(std::int64_t slide_id, int width, int height,
                                    std::span<const int> xs, std::span<const int> ys,
                                    std::span<const double> tumor_probability);

// P2 grayscale, value round(255 p), sentinel cells written as 0.
void write_pgm(const ConfidenceMap& map, std::ostream& out);
// 255 where a tile exists, 0 at sentinel cells.
void write_mask_pgm(const ConfidenceMap& map, std::ostream& out);
// One CSV row per grid row; sentinel cells are left empty.
void write_map_csv(const ConfidenceMap& map, std::ostream& out);

struct SlidePrediction {
  std::int64_t slide_id = 0;
  std::vector<double> probs;
  double uncertainty = 0.0;
  std::string method;
};

// Averages the mean predictions of the ceil(q n) most confident tiles
// (stable on ties); uncertainty is 1 - confidence of that average.
SlidePrediction aggregate_top_q(const PredictionSet& tiles, double q, std::int64_t slide_id);

// Groups a tile-level set by slide_id (ascending) and aggregates each slide.
// The resulting single-draw set carries slide_labels where provided.
PredictionSet aggregate_slides(const PredictionSet& tiles, double q,
                               const std::vector<std::pair<std::int64_t, int>>& slide_labels,
                               const std::string& method);

// Gated attention pooling over embedded instances:
//   h_k = dropout(relu(W1 x_k + b1))
//   a = softmax_k(w . (tanh(V h_k + bv) * sigmoid(U h_k + bu)))
//   p = softmax(Wc sum_k a_k h_k + bc)
struct AttentionMilHead {
  nn::Matrix w1;  // D x F
  nn::RowVector b1;
  nn::Matrix v;   // A x D
  nn::RowVector bv;
  nn::Matrix u;   // A x D
  nn::RowVector bu;
  nn::RowVector w;  // A
  nn::Matrix wc;  // C x D
  nn::RowVector bc;
  double dropout_p = 0.25;

  static AttentionMilHead make(int features, int embed, int attention, int classes, double dropout_p,
                               Rng& rng);
  int input_width() const { return static_cast<int>(w1.cols()); }
  int classes() const { return static_cast<int>(wc.rows()); }
  void validate() const;
  std::vector<std::span<double>> parameters();
  friend bool operator==(const AttentionMilHead&, const AttentionMilHead&) = default;
};

struct MilTape {
  nn::Matrix x, pre1, mask, h, gate_a, gate_g;
  std::vector<double> attention;
  std::vector<double> pooled;
};

struct MilOutput {
  std::vector<double> probs;
  std::vector<double> attention;
};

MilOutput attention_mil_forward(const AttentionMilHead& head, const nn::Matrix& bag, nn::Mode mode,
                                Rng* rng, MilTape* tape = nullptr);
// Gradient of -log p[label], laid out like parameters().
nn::Gradients attention_mil_backward(const AttentionMilHead& head, const MilTape& tape,
                                     const MilOutput& out, int label);

struct Bag {
  std::int64_t slide_id = 0;
  int center_id = -1;
  int label = 0;
  nn::Matrix features;
};

struct MilTrainConfig {
  double learning_rate = 2e-4;
  double weight_decay = 1e-5;
  int min_epochs = 50;
  int max_epochs = 200;
  int patience = 20;
  std::uint64_t seed = 0;
  void validate() const;
};

struct MilEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct MilTrainResult {
  AttentionMilHead head;  // snapshot with the lowest validation loss
  std::vector<MilEpoch> history;
  int best_epoch = 0;
  int stopped_epoch = 0;
};

// One bag per step, bags drawn with inverse class-frequency weights.
// Training stops once min_epochs have passed and the validation loss has
// not improved for patience epochs, or at max_epochs.
MilTrainResult train_mil(AttentionMilHead head, std::span<const Bag> train_bags,
                         std::span<const Bag> val_bags, const MilTrainConfig& config);

// Deep ensemble over heads (S = heads) or Monte-Carlo dropout over a single
// head (S = n_samples); the sample_id of each row is the slide_id.
PredictionSet mil_predict_ensemble(std::span<const AttentionMilHead> heads, std::span<const Bag> bags,
                                   const std::string& method);
PredictionSet mil_predict_mcdo(const AttentionMilHead& head, std::span<const Bag> bags, int n_samples,
                               Rng& rng, const std::string& method);

}  // namespace suq::slide

#endif  // SUQ_SLIDE_AGG_HPP_
