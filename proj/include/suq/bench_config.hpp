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

// Experiment configuration: one JSON document, every key optional.

#ifndef SUQ_BENCH_CONFIG_HPP_
#define SUQ_BENCH_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "suq/methods.hpp"
#include "suq/wsi_sim.hpp"

namespace suq::bench {

struct MethodParams {
  int n_members = 5;
  int n_samples = 10;
  double dropout_p = 0.3;
  double prior_weight = 1e-3;
  double jitter_sigma = 0.1;
  double scale_lo = 0.8;
  double scale_hi = 1.2;
};

struct TrainSection {
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  int plateau_patience = 3;
  double plateau_factor = 0.1;
  int max_epochs = 30;
  std::vector<int> hidden = {64, 64};
  bool class_balanced = true;
};

struct EvalSection {
  std::size_t ece_bins = 10;
  std::size_t top_k = 10;
  bool confidence_maps = true;
  double reject_fraction = 0.2;  // operating point reported next to the curves
  std::size_t curve_points = 101;  // rows per exported curve; 0 keeps every rejection count
};

struct SlideSection {
  int slides_per_center = 16;
  int grid = 16;
  double msi_fraction = 0.4;
  double msi_shift = 1.5;
  double top_q = 0.01;
  int embed = 32;
  int attention = 32;
  double dropout_p = 0.25;
  double learning_rate = 2e-4;
  double weight_decay = 1e-5;
  int min_epochs = 50;
  int max_epochs = 200;
  int patience = 20;
  int members = 5;
  int mc_samples = 10;
  int trials = 3;
};

struct ExperimentConfig {
  sim::DataConfig data;
  std::optional<std::uint64_t> data_seed;  // derived from seed when absent
  std::string split = "strong";
  int split_center = -1;
  double train_fraction = 0.75;
  std::vector<std::string> methods = {"Baseline", "Ensemble",   "MCDO", "MCDO-Ensemble",
                                      "TTA",      "TTA-Ensemble", "SVI",  "SVI-Ensemble"};
  MethodParams method_params;
  TrainSection train;
  double flip_prob = 0.25;
  EvalSection evaluation;
  SlideSection slide;
  int trials = 5;
  std::uint64_t seed = 7;
  std::string output = "runs";
  int jobs = 1;

  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);

  void validate() const;
  sim::DataConfig resolved_data() const;
  sim::SplitSpec split_spec() const;
  MethodSpec method_spec(const std::string& name) const;
  std::uint64_t trial_seed(int trial) const;

  // Canonical serialization of everything that influences results; the
  // output directory and job count are left out.
  std::string canonical_json() const;
  // First 16 hex digits of the SHA-256 of canonical_json().
  std::string hash() const;
};

}  // namespace suq::bench

#endif  // SUQ_BENCH_CONFIG_HPP_
