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

// suq-cli: command-line driver over the C API.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "suq.h"

namespace {

int finish(suq_status status, suq_report* report) {
  if (status != SUQ_OK) {
    std::fprintf(stderr, "error (%s): %s\n", suq_status_name(status), suq_last_error());
    return 2;
  }
  if (report) {
    std::fputs(suq_report_json(report), stdout);
    suq_report_free(report);
  }
  return 0;
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-quantification benchmark for synthetic whole-slide tile classification"};
  app.set_version_flag("--version", std::string(suq_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int jobs = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Experiment seed (overrides the config)");
  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output root directory (overrides the config)");
  app.add_option("--jobs", jobs, "Concurrent training jobs")->check(CLI::PositiveNumber);
  for (auto* opt : app.get_options()) opt->configurable(false);
  app.fallthrough();

  std::vector<std::string> inputs;
  std::vector<std::string> run_dirs;
  std::string run_dir;
  std::string verify_dir;
  auto* generate = app.add_subcommand("generate", "Write the synthetic dataset and split manifest");
  auto* run = app.add_subcommand("run", "Train every method and write prediction files");
  auto* evaluate = app.add_subcommand("evaluate", "Compute reports from prediction files");
  evaluate->add_option("inputs", inputs, "Run directory, prediction directory or prediction CSV files");
  auto* noise = app.add_subcommand("noise-suite", "Train on the four label-noise variants and compare");
  auto* rank = app.add_subcommand("rank", "Rank methods over the five leave-one-out runs");
  rank->add_option("runs", run_dirs, "Run directories (default: derived from the config)");
  auto* compare = app.add_subcommand("compare-measures", "AUARC of confidence, entropy and variance");
  compare->add_option("run", run_dir, "Run directory (default: derived from the config)");
  auto* slide = app.add_subcommand("slide-suite", "Slide-level attention pooling and top-q aggregation");
  auto* verify = app.add_subcommand("verify", "Check the file manifest of a run directory");
  verify->add_option("dir", verify_dir, "Directory holding run.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  suq_options options{};
  options.config_path = config_path.empty() ? nullptr : config_path.c_str();
  options.out_dir = out_dir.empty() ? nullptr : out_dir.c_str();
  options.has_seed = seed_opt->count() > 0;
  options.seed = seed;
  options.jobs = jobs;

  suq_report* report = nullptr;
  suq_status status = SUQ_OK;
  if (generate->parsed()) {
    status = suq_generate(&options, &report);
  } else if (run->parsed()) {
    status = suq_run(&options, &report);
  } else if (evaluate->parsed()) {
    const auto c = c_strings(inputs);
    status = suq_evaluate(&options, c.data(), c.size(), &report);
  } else if (noise->parsed()) {
    status = suq_noise_suite(&options, &report);
  } else if (rank->parsed()) {
    const auto c = c_strings(run_dirs);
    status = suq_rank(&options, c.data(), c.size(), &report);
  } else if (compare->parsed()) {
    status = suq_compare_measures(&options, run_dir.empty() ? nullptr : run_dir.c_str(), &report);
  } else if (slide->parsed()) {
    status = suq_slide_suite(&options, &report);
  } else if (verify->parsed()) {
    status = suq_verify_manifest(verify_dir.c_str());
    if (status == SUQ_OK) std::puts("manifest ok");
  } else {
    return 1;
  }
  return finish(status, report);
}
