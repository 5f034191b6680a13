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

#ifndef SUQ_SAMPLING_HPP_
#define SUQ_SAMPLING_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "suq/common.hpp"

namespace suq {

// Draws mini-batches with replacement such that every class in
// [0, num_classes) has the same expected share of each batch. Every class
// must be present in `labels`.
class BalancedBatchSampler {
 public:
  BalancedBatchSampler(std::span<const int> labels, int num_classes, std::size_t batch_size);

  std::vector<std::size_t> next(Rng& rng) const;

  std::size_t batch_size() const { return batch_size_; }
  std::size_t num_classes() const { return by_class_.size(); }

 private:
  std::vector<std::vector<std::size_t>> by_class_;
  std::size_t batch_size_;
};

// Weighted sampling with replacement; weights need not be normalized.
std::vector<std::size_t> weighted_sample(std::span<const double> weights, std::size_t count,
                                         Rng& rng);

// Per-item weights that make every class equally likely under
// weighted_sample (inverse class frequency).
std::vector<double> inverse_frequency_weights(std::span<const int> labels);

}  // namespace suq

#endif  // SUQ_SAMPLING_HPP_
