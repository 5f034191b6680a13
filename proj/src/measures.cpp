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

#include "suq/measures.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

namespace suq {

std::string_view measure_name(Measure m) {
  switch (m) {
    case Measure::kConfidence: return "confidence";
    case Measure::kNormedEntropy: return "normed_entropy";
    case Measure::kVariance: return "variance";
  }
  return "?";
}

Measure measure_from_name(std::string_view name) {
  if (name == "confidence") return Measure::kConfidence;
  if (name == "normed_entropy" || name == "entropy") return Measure::kNormedEntropy;
  if (name == "variance") return Measure::kVariance;
  throw ConfigError("unknown uncertainty measure '" + std::string(name) + "'");
}

double confidence(std::span<const double> probs) {
  validate_probability_vector(probs);
  return *std::max_element(probs.begin(), probs.end());
}

namespace {

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace

double normed_entropy(std::span<const double> probs, std::size_t classes) {
  if (classes < 2) throw InvalidArgument("normed entropy needs at least two classes");
  if (probs.size() != classes) throw ShapeError("normed entropy: vector length differs from class count");
  validate_probability_vector(probs);
  double h = 0.0;
  if (classes == 2) {
    const double q = std::max(probs[0], probs[1]);
    h = -plogp(q) - plogp(1.0 - q);
  } else {
    for (double p : probs) h -= plogp(p);
  }
  return std::clamp(h / std::log(static_cast<double>(classes)), 0.0, 1.0);
}

double variance_uncertainty(const PredictionSet& set, std::size_t index) {
  const std::size_t s = set.draws();
  const std::size_t c = set.classes();
  // Shifted by the first draw so that identical draws give exactly zero.
  const auto ref = set.row(index, 0);
  double total = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t d = 1; d < s; ++d) {
      const double diff = set.row(index, d)[k] - ref[k];
      sum += diff;
      sq += diff * diff;
    }
    const double m = sum / static_cast<double>(s);
    total += std::max(0.0, sq / static_cast<double>(s) - m * m);
  }
  return total / static_cast<double>(c);
}

namespace {

// Means of draws that agree mathematically can differ in the last bits depending on
// summation order; both mean-based measures read them on a 2^-40 grid so such samples tie.
std::vector<double> resolved_mean(const PredictionSet& set, std::size_t index) {
  auto m = mean_prediction(set, index);
  constexpr double kGrid = 1099511627776.0;
  for (double& v : m) v = std::round(v * kGrid) / kGrid;
  return m;
}

}  // namespace

std::vector<UncertaintyScore> score_set(const PredictionSet& set, Measure measure) {
  if (measure == Measure::kVariance && set.draws() < 2)
    throw InvalidArgument("variance needs more than one draw per sample; use confidence or normed entropy");
  std::vector<UncertaintyScore> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    UncertaintyScore& s = out[i];
    s.sample_id = set.sample(i).sample_id;
    s.measure = measure;
    switch (measure) {
      case Measure::kConfidence:
        s.value = confidence(resolved_mean(set, i));
        s.higher_is_more_uncertain = false;
        break;
      case Measure::kNormedEntropy:
        s.value = normed_entropy(resolved_mean(set, i), set.classes());
        s.higher_is_more_uncertain = true;
        break;
      case Measure::kVariance:
        s.value = variance_uncertainty(set, i);
        s.higher_is_more_uncertain = true;
        break;
    }
  }
  return out;
}

std::vector<double> oriented_uncertainty(std::span<const UncertaintyScore> scores) {
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i].uncertainty();
  return out;
}

void write_scores_csv(std::span<const UncertaintyScore> scores, std::ostream& out) {
  out << "sample_id,measure,value\n";
  for (const auto& s : scores)
    out << s.sample_id << ',' << measure_name(s.measure) << ',' << format_double(s.value) << '\n';
}

}  // namespace suq
