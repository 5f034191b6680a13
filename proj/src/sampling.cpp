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

#include "suq/sampling.hpp"

#include <numeric>
#include <string>

namespace suq {

BalancedBatchSampler::BalancedBatchSampler(std::span<const int> labels, int num_classes,
                                           std::size_t batch_size)
    : by_class_(static_cast<std::size_t>(num_classes)), batch_size_(batch_size) {
  if (num_classes < 1) throw InvalidArgument("num_classes must be positive");
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes)
      throw InvalidArgument("label " + std::to_string(y) + " out of range");
    by_class_[static_cast<std::size_t>(y)].push_back(i);
  }
  for (std::size_t c = 0; c < by_class_.size(); ++c)
    if (by_class_[c].empty())
      throw InvalidArgument("class " + std::to_string(c) + " absent from training set");
}

std::vector<std::size_t> BalancedBatchSampler::next(Rng& rng) const {
  std::uniform_int_distribution<std::size_t> pick_class(0, by_class_.size() - 1);
  std::vector<std::size_t> batch(batch_size_);
  for (auto& idx : batch) {
    const auto& members = by_class_[pick_class(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    idx = members[pick(rng)];
  }
  return batch;
}

std::vector<std::size_t> weighted_sample(std::span<const double> weights, std::size_t count,
                                         Rng& rng) {
  if (weights.empty()) throw InvalidArgument("weighted_sample: no weights");
  std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
  std::vector<std::size_t> out(count);
  for (auto& v : out) v = dist(rng);
  return out;
}

std::vector<double> inverse_frequency_weights(std::span<const int> labels) {
  int max_label = -1;
  for (int y : labels) max_label = std::max(max_label, y);
  std::vector<double> counts(static_cast<std::size_t>(max_label + 1), 0.0);
  for (int y : labels) {
    if (y < 0) throw InvalidArgument("negative label");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  std::vector<double> w(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    w[i] = 1.0 / counts[static_cast<std::size_t>(labels[i])];
  return w;
}

}  // namespace suq
