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

// Experiment orchestration behind the command-line subcommands.
//
// Layout of a run: <output>/<config-hash>/
//   dataset/{tiles.csv,split.json}
//   models/<family>__t<trial>__m<member>.net
//   predictions/<method>__t<trial>__<partition>.csv
//   reports/...
//   run.json   (record + SHA-256 of every file above)
//   log.txt    (timestamps; not covered by the manifest)

#ifndef SUQ_BENCH_HPP_
#define SUQ_BENCH_HPP_

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "suq/bench_config.hpp"
#include "suq/methods.hpp"
#include "suq/wsi_sim.hpp"

namespace suq::bench {

namespace fs = std::filesystem;

struct CommandResult {
  fs::path dir;
  std::string json;  // summary document of the command
};

fs::path run_directory(const ExperimentConfig& config);

CommandResult cmd_generate(const ExperimentConfig& config);
CommandResult cmd_run(const ExperimentConfig& config);
// inputs: run directories, prediction directories or prediction files;
// empty means the run directory of config.
CommandResult cmd_evaluate(const ExperimentConfig& config, const std::vector<fs::path>& inputs);
CommandResult cmd_noise_suite(const ExperimentConfig& config);
// run_dirs empty means the five leave-one-out runs derived from config.
CommandResult cmd_rank(const ExperimentConfig& config, const std::vector<fs::path>& run_dirs);
CommandResult cmd_compare_measures(const ExperimentConfig& config, const fs::path& run_dir);
CommandResult cmd_slide_suite(const ExperimentConfig& config);

// (method, trial, partition)
using PredictionKey = std::tuple<std::string, int, std::string>;

// "<method>__t<trial>__<partition>.csv"; other names map to (stem, 0, "test").
std::string prediction_file_name(const PredictionKey& key);
PredictionKey parse_prediction_file_name(const std::string& file_name);

struct TrialFailure {
  int trial = 0;
  std::string family;
  std::string message;
};

// Trains every network family the methods need and predicts the ID and OOD
// test partitions; sink receives each finished PredictionSet.
std::vector<TrialFailure> run_trials(
    const ExperimentConfig& config, const sim::Dataset& data, const sim::Split& split,
    const std::function<void(const PredictionKey&, const PredictionSet&)>& sink,
    const fs::path& model_dir = {});

// Pure evaluation: relative report path -> file content. tiles may be
// null when predictions do not come from a known dataset.
using ReportFiles = std::map<std::string, std::string>;
ReportFiles evaluate_predictions(const ExperimentConfig& config, const std::vector<PredictionKey>& keys,
                                 const std::function<PredictionSet(const PredictionKey&)>& load,
                                 const std::vector<sim::TileRecord>* tiles, int expected_trials);

void write_report_files(const fs::path& root, const ReportFiles& files);

// Rewrites the "files" list of <dir>/run.json from the directory contents.
void update_manifest(const fs::path& dir);
// Empty when every listed file exists with the recorded hash.
std::vector<std::string> verify_manifest(const fs::path& dir);

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace suq::bench

#endif  // SUQ_BENCH_HPP_
