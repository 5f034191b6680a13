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

#include <cmath>
#include <vector>

#include "doctest.h"
#include "suq/common.hpp"
#include "suq/measures.hpp"
#include "suq/methods.hpp"
#include "suq/metrics.hpp"

using namespace suq;

namespace {

std::vector<SampleInfo> infos(std::size_t n) {
  std::vector<SampleInfo> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i].sample_id = static_cast<std::int64_t>(i);
  return v;
}

}  // namespace

TEST_CASE("confidence") {
  const std::vector<double> half = {0.5, 0.5}, onehot = {0.0, 1.0}, p = {0.3, 0.7};
  CHECK(confidence(half) == 0.5);
  CHECK(confidence(onehot) == 1.0);
  CHECK(confidence(p) == 0.7);
}

TEST_CASE("normed entropy") {
  const std::vector<double> onehot = {1.0, 0.0}, p = {0.9, 0.1}, u3 = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(normed_entropy(onehot, 2) == 0.0);
  CHECK(normed_entropy(p, 2) == doctest::Approx(0.4690).epsilon(1e-4));
  CHECK(normed_entropy(u3, 3) == doctest::Approx(1.0));
}

TEST_CASE("variance") {
  const PredictionSet s("m", infos(1), 2, 2, {1.0, 0.0, 0.0, 1.0});
  CHECK(variance_uncertainty(s, 0) == doctest::Approx(0.25));
  const PredictionSet single("m", infos(1), 1, 2, {0.3, 0.7});
  CHECK(variance_uncertainty(single, 0) == 0.0);
  CHECK_THROWS_AS(score_set(single, Measure::kVariance), InvalidArgument);
  const PredictionSet same("m", infos(1), 3, 2, {0.3, 0.7, 0.3, 0.7, 0.3, 0.7});
  CHECK(variance_uncertainty(same, 0) == 0.0);
}

TEST_CASE("a single draw scores with the confidence of its row") {
  const PredictionSet s("m", infos(2), 1, 2, {0.3, 0.7, 0.9, 0.1});
  const auto sc = score_set(s, Measure::kConfidence);
  // Scores are resolved on a 2^-40 grid.
  CHECK(std::abs(sc[0].value - 0.7) <= 0x1p-41);
  CHECK(std::abs(sc[1].value - 0.9) <= 0x1p-41);
  CHECK(sc[0].uncertainty() == doctest::Approx(0.3));
}

TEST_CASE("measure names") {
  for (auto m : {Measure::kConfidence, Measure::kNormedEntropy, Measure::kVariance})
    CHECK(measure_from_name(measure_name(m)) == m);
  CHECK_THROWS(measure_from_name("nope"));
}

TEST_CASE("binary sets: confidence and entropy reject in the same order") {
  Rng rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> nd(2, 40), sd(1, 5), lab(0, 1);
  int mismatched_orders = 0;
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = static_cast<std::size_t>(nd(rng));
    const std::size_t s = static_cast<std::size_t>(sd(rng));
    std::vector<double> probs;
    for (std::size_t i = 0; i < n * s; ++i) {
      // Coarse values make exact ties common.
      const double p = t % 3 == 0 ? std::round(u(rng) * 8) / 8 : t % 3 == 1 ? std::round(u(rng) * 6) / 6 : u(rng);
      probs.push_back(p);
      probs.push_back(1.0 - p);
    }
    auto inf = infos(n);
    for (auto& i : inf) i.label = lab(rng);
    const PredictionSet set("m", inf, s, 2, probs);
    const auto conf = oriented_uncertainty(score_set(set, Measure::kConfidence));
    const auto ent = oriented_uncertainty(score_set(set, Measure::kNormedEntropy));
    if (rejection_order(conf) != rejection_order(ent)) ++mismatched_orders;
    const auto pred = predicted_labels(set);
    const auto truth = true_labels(set);
    const double a = accuracy_reject_curve(conf, pred, truth, CurveMetric::kAccuracy).auarc;
    const double b = accuracy_reject_curve(ent, pred, truth, CurveMetric::kAccuracy).auarc;
    worst = std::max(worst, std::abs(a - b));
  }
  CHECK(mismatched_orders == 0);
  CHECK(worst <= 1e-12);
}
