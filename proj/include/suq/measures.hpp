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

#ifndef SUQ_MEASURES_HPP_
#define SUQ_MEASURES_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "suq/methods.hpp"

namespace suq {

enum class Measure { kConfidence, kNormedEntropy, kVariance };

std::string_view measure_name(Measure m);
Measure measure_from_name(std::string_view name);

struct UncertaintyScore {
  std::int64_t sample_id = 0;
  double value = 0.0;
  Measure measure = Measure::kConfidence;
  bool higher_is_more_uncertain = false;

  // Value mapped so that larger always means more uncertain.
  double uncertainty() const { return higher_is_more_uncertain ? value : 1.0 - value; }
};

// Maximum class probability, in [1/C, 1].
double confidence(std::span<const double> probs);

// Shannon entropy (natural log, 0 log 0 = 0) divided by log(classes), in
// [0, 1]. Binary vectors are evaluated through their confidence q as
// h(q) = -q log q - (1-q) log(1-q), so the entropy/confidence ordering
// relation also holds exactly in floating point.
double normed_entropy(std::span<const double> probs, std::size_t classes);

// Mean over classes of the population variance of that class's probability
// across the draws of one sample. 0 when all draws agree.
double variance_uncertainty(const PredictionSet& set, std::size_t index);

// Confidence and entropy are computed on the mean prediction, variance
// across draws. Variance of a single-draw set is rejected.
std::vector<UncertaintyScore> score_set(const PredictionSet& set, Measure measure);

std::vector<double> oriented_uncertainty(std::span<const UncertaintyScore> scores);

// CSV: sample_id,measure,value
void write_scores_csv(std::span<const UncertaintyScore> scores, std::ostream& out);

}  // namespace suq

#endif  // SUQ_MEASURES_HPP_
