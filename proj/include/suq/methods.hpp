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

// Uncertainty methods: every method turns one or more trained networks into
// a PredictionSet holding S stochastic predictive distributions per sample.

#ifndef SUQ_METHODS_HPP_
#define SUQ_METHODS_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "suq/common.hpp"
#include "suq/nn.hpp"

namespace suq {

struct SampleInfo {
  std::int64_t sample_id = 0;
  std::int64_t slide_id = -1;
  int center_id = -1;
  int label = -1;  // -1 when unknown

  friend bool operator==(const SampleInfo&, const SampleInfo&) = default;
};

inline constexpr double kProbabilityTolerance = 1e-9;

// Throws DomainError unless v is non-negative, finite and sums to 1 within
// kProbabilityTolerance.
void validate_probability_vector(std::span<const double> v);

// Per sample, an S x C matrix of probability rows (row-major, sample-major).
class PredictionSet {
 public:
  PredictionSet() = default;
  PredictionSet(std::string method, std::vector<SampleInfo> samples, std::size_t draws,
                std::size_t classes, std::vector<double> probs);

  const std::string& method() const { return method_; }
  std::size_t size() const { return samples_.size(); }
  std::size_t draws() const { return draws_; }
  std::size_t classes() const { return classes_; }
  const SampleInfo& sample(std::size_t i) const { return samples_.at(i); }
  const std::vector<SampleInfo>& samples() const { return samples_; }
  std::span<const double> row(std::size_t sample, std::size_t draw) const;
  std::span<const double> values() const { return probs_; }

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;

 private:
  std::string method_;
  std::vector<SampleInfo> samples_;
  std::size_t draws_ = 0;
  std::size_t classes_ = 0;
  std::vector<double> probs_;
};

// Arithmetic mean over the S draws of one sample.
std::vector<double> mean_prediction(const PredictionSet& set, std::size_t index);
// Argmax of the mean prediction (lowest class index on ties).
std::vector<int> predicted_labels(const PredictionSet& set);
std::vector<int> true_labels(const PredictionSet& set);

// Synthetic test-time augmentation: optional quarter-turn rotation of
// square-grid features, a per-feature gain drawn from [scale_lo, scale_hi],
// then additive Gaussian jitter of jitter_sigma * feature_std[j].
struct AugmentationSpec {
  double jitter_sigma = 0.1;
  double scale_lo = 0.8;
  double scale_hi = 1.2;
  bool rotate90 = false;
  std::vector<double> feature_std;  // empty means unit scale

  static AugmentationSpec identity();
  bool is_identity() const;
  void validate() const;
};

void augment_features(nn::Matrix& x, const AugmentationSpec& spec, Rng& rng);

enum class MethodKind { kBaseline, kMCDO, kSVI, kTTA };

struct MethodSpec {
  MethodKind kind = MethodKind::kBaseline;
  bool ensemble = false;  // EnsembleOf(kind); Baseline + ensemble is the plain deep ensemble
  int n_members = 5;
  int n_samples = 10;
  double dropout_p = 0.3;
  double prior_weight = 1e-3;
  AugmentationSpec augmentation;

  // "Baseline", "Ensemble", "MCDO", "MCDO-Ensemble", "TTA", ...
  std::string name() const;
  static MethodSpec from_name(std::string_view name);
  int members() const { return ensemble ? n_members : 1; }
  // Draws per sample the method produces.
  int draws() const;
  void validate() const;
};

std::string_view kind_name(MethodKind kind);

PredictionSet predict_baseline(const nn::Network& net, const nn::Matrix& x,
                               std::vector<SampleInfo> info);
PredictionSet predict_ensemble(std::span<const nn::Network> members, const nn::Matrix& x,
                               std::vector<SampleInfo> info);
PredictionSet predict_mcdo(const nn::Network& net, const nn::Matrix& x,
                           std::vector<SampleInfo> info, int n_samples, Rng& rng);
PredictionSet predict_svi(const nn::Network& net, const nn::Matrix& x, std::vector<SampleInfo> info,
                          int n_samples, Rng& rng);
// Draw 0 is the un-augmented input.
PredictionSet predict_tta(const nn::Network& net, const nn::Matrix& x, std::vector<SampleInfo> info,
                          int n_samples, const AugmentationSpec& aug, Rng& rng);
// Member-major pooling of the inner method over every member; S = members * n_samples
// (members for the baseline inner method).
PredictionSet predict_ensemble_of(MethodKind inner, std::span<const nn::Network> members,
                                  const nn::Matrix& x, std::vector<SampleInfo> info,
                                  int n_samples, const AugmentationSpec& aug, Rng& rng);

// Dispatches on spec; members must hold spec.members() networks. The
// result is tagged with spec.name().
PredictionSet predict(const MethodSpec& spec, std::span<const nn::Network> members,
                      const nn::Matrix& x, std::vector<SampleInfo> info, Rng& rng);

// CSV: sample_id,slide_id,center_id,label,draw,p0,...,p{C-1}; one row per
// (sample, draw), draws of a sample contiguous and in order.
void write_predictions_csv(const PredictionSet& set, std::ostream& out);
std::string predictions_csv(const PredictionSet& set);
PredictionSet read_predictions_csv(std::istream& in, std::string method);
PredictionSet read_predictions_csv_file(const std::string& path, std::string method);

}  // namespace suq

#endif  // SUQ_METHODS_HPP_
