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

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "suq/bench.hpp"
#include "suq/bench_config.hpp"
#include "suq/common.hpp"
#include "suq/methods.hpp"

using namespace suq;
using namespace suq::bench;
using nlohmann::json;

namespace {

const fs::path kRoot = "bench_test_out";

// Small enough to train in about a second.
ExperimentConfig tiny(const std::string& name, const std::string& extra = "") {
  std::string text = R"({"output":")" + (kRoot / name).generic_string() +
                     R"(","trials":2,"data":{"slides_per_center":4,"grid_width":8,"grid_height":8},)"
                     R"("method_params":{"n_members":2,"n_samples":3},"train":{"max_epochs":2,"hidden":[8]})";
  if (!extra.empty()) text += "," + extra;
  text += "}";
  return ExperimentConfig::from_json(text);
}

std::set<std::string> files_under(const fs::path& dir) {
  std::set<std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.insert(fs::relative(e.path(), dir).generic_string());
  return out;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& f : files_under(dir)) out[f] = read_text_file(dir / f);
  return out;
}

struct Clean {
  Clean() { fs::remove_all(kRoot); }
};
const Clean clean_once;

}  // namespace

TEST_CASE("config defaults and parsing") {
  const auto c = ExperimentConfig::from_json("{}");
  CHECK(c.methods.size() == 8);
  CHECK(c.trials == 5);
  CHECK(c.method_params.n_members == 5);
  CHECK(c.method_params.n_samples == 10);
  CHECK(c.method_params.dropout_p == 0.3);
  CHECK(c.flip_prob == 0.25);
  CHECK(c.train.batch_size == 128);
  CHECK(c.split == "strong");
  CHECK(c.method_spec("SVI-Ensemble").draws() == 50);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"bogus":1})"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"data":{"bogus":1}})"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"methods":["Nope"]})"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"trials":0})"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json("{not json"), ConfigError);
  CHECK(ExperimentConfig::from_json(R"({"split":{"kind":"loo","center":3}})").split_spec().name() == "loo3");
}

TEST_CASE("config hash ignores output location and parallelism") {
  const auto a = ExperimentConfig::from_json(R"({"output":"x","jobs":1})");
  const auto b = ExperimentConfig::from_json(R"({"output":"y","jobs":4})");
  const auto c = ExperimentConfig::from_json(R"({"seed":8})");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  CHECK(a.hash().size() == 16);
  CHECK(ExperimentConfig::from_json(a.canonical_json()).hash() == a.hash());
}

TEST_CASE("prediction file names") {
  const PredictionKey k{"MCDO-Ensemble", 3, "ood"};
  CHECK(prediction_file_name(k) == "MCDO-Ensemble__t3__ood.csv");
  CHECK(parse_prediction_file_name("MCDO-Ensemble__t3__ood.csv") == k);
  CHECK(parse_prediction_file_name("mine.csv") == PredictionKey{"mine", 0, "test"});
}

TEST_CASE("generate is deterministic and records the split") {
  const auto cfg = tiny("gen", R"("split":{"kind":"weak"})");
  const auto r1 = cmd_generate(cfg);
  const auto first = snapshot(r1.dir / "dataset");
  const auto r2 = cmd_generate(cfg);
  CHECK(r1.dir == r2.dir);
  CHECK(snapshot(r2.dir / "dataset") == first);
  const auto j = json::parse(r1.json);
  CHECK(j["id_centers"] == json({0, 2, 4}));
  CHECK(j["ood_centers"] == json({1, 3}));
  CHECK(j["test_slides"].size() == 6);
  const auto split = json::parse(read_text_file(r1.dir / "dataset" / "split.json"));
  CHECK(split.is_object());
  CHECK(verify_manifest(r1.dir).empty());
}

TEST_CASE("run writes one file per method, trial and partition") {
  const auto cfg = tiny("run");
  const auto r = cmd_run(cfg);
  std::size_t preds = 0;
  for (const auto& f : files_under(r.dir / "predictions")) preds += f.ends_with(".csv");
  CHECK(preds == 8 * 2 * 2);
  const auto rec = json::parse(read_text_file(r.dir / "run.json"));
  CHECK(rec["failures"].empty());
  CHECK(rec["missing"].empty());
  CHECK(verify_manifest(r.dir).empty());
  const auto ens = read_predictions_csv_file((r.dir / "predictions" / "TTA-Ensemble__t1__id.csv").string(), "x");
  CHECK(ens.draws() == 6);

  const auto again = cmd_run(cfg);
  CHECK(again.dir == r.dir);
  CHECK(json::parse(again.json)["config_hash"] == json::parse(r.json)["config_hash"]);

  const auto base = tiny("run_baseline", R"("methods":["Baseline"])");
  const auto rb = cmd_run(base);
  CHECK(files_under(rb.dir / "predictions").size() == 2 * 2);
}

TEST_CASE("evaluate is repeatable and summarizes every trial") {
  const auto cfg = tiny("eval");
  const auto r = cmd_run(cfg);
  cmd_evaluate(cfg, {});
  const auto first = snapshot(r.dir / "reports");
  cmd_evaluate(cfg, {r.dir});
  CHECK(snapshot(r.dir / "reports") == first);
  CHECK(first.count("summary.json") == 1);
  CHECK(first.count("table_auarc.csv") == 1);
  const auto s = json::parse(first.at("summary.json"));
  CHECK(s["results"].size() == 16);
  for (const auto& row : s["results"]) {
    CHECK(row["trials"].size() == 2);
    CHECK(row["incomplete"] == false);
    CHECK(row["auarc_accuracy"].contains("mean"));
    CHECK(row["auarc_accuracy"].contains("std"));
  }
  CHECK(verify_manifest(r.dir).empty());

  // Tampering is caught.
  std::ofstream(r.dir / "reports" / "summary.json", std::ios::app) << " ";
  std::ofstream(r.dir / "reports" / "extra.txt") << "x";
  const auto problems = verify_manifest(r.dir);
  CHECK(problems.size() == 2);
}

TEST_CASE("perfect external predictions") {
  const fs::path dir = kRoot / "perfect";
  fs::create_directories(dir);
  std::vector<SampleInfo> info(20);
  std::vector<double> p;
  for (std::size_t i = 0; i < 20; ++i) {
    info[i].sample_id = static_cast<std::int64_t>(i);
    info[i].slide_id = static_cast<std::int64_t>(i / 5);
    info[i].label = static_cast<int>(i % 2);
    p.push_back(info[i].label ? 0.0 : 1.0);
    p.push_back(info[i].label ? 1.0 : 0.0);
  }
  write_text_file(dir / "Perfect__t0__test.csv", predictions_csv(PredictionSet("Perfect", info, 1, 2, p)));
  auto cfg = ExperimentConfig::from_json(R"({"output":")" + (kRoot / "perfect_out").generic_string() + R"("})");
  const auto r = cmd_evaluate(cfg, {dir / "Perfect__t0__test.csv"});
  const auto s = json::parse(read_text_file(r.dir / "reports" / "summary.json"));
  REQUIRE(s["results"].size() == 1);
  CHECK(s["results"][0]["auarc_accuracy"]["mean"] == 1.0);
  CHECK(s["results"][0]["ece"]["mean"] == 0.0);
}

TEST_CASE("external prediction round trip") {
  const auto cfg = tiny("roundtrip", R"("methods":["Baseline","MCDO"])");
  const auto dataset = cmd_generate(cfg);
  std::map<PredictionKey, PredictionSet> sets;
  const fs::path ext = kRoot / "roundtrip_ext";
  fs::create_directories(ext);
  // Rebuild the dataset in-process so the predictions come straight from training.
  std::vector<PredictionKey> keys;
  {
    const auto data = sim::generate_dataset(cfg.resolved_data());
    const auto split = sim::make_split(data, cfg.split_spec(), cfg.resolved_data().seed);
    run_trials(cfg, data, split, [&](const PredictionKey& k, const PredictionSet& s) {
      sets.emplace(k, s);
    });
  }
  for (const auto& [k, s] : sets) {
    keys.push_back(k);
    write_text_file(ext / prediction_file_name(k), predictions_csv(s));
  }
  const auto in_process = evaluate_predictions(
      cfg, keys, [&](const PredictionKey& k) { return sets.at(k); }, nullptr, cfg.trials);
  const auto r = cmd_evaluate(cfg, {ext});
  const auto on_disk = snapshot(r.dir / "reports");
  CHECK(on_disk.size() == in_process.size());
  for (const auto& [name, content] : in_process) {
    REQUIRE(on_disk.count(name) == 1);
    CHECK(on_disk.at(name) == content);
  }
}

TEST_CASE("rank needs every leave-one-out run") {
  auto base = tiny("rank", R"("methods":["Baseline","Ensemble","MCDO"],"trials":1)");
  std::vector<fs::path> runs;
  for (int c = 0; c < 5; ++c) {
    auto cfg = base;
    cfg.split = "loo";
    cfg.split_center = c;
    runs.push_back(cmd_run(cfg).dir);
  }
  try {
    cmd_rank(base, {runs[0], runs[1]});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("loo4") != std::string::npos);
  }
  const auto r = cmd_rank(base, runs);
  const auto j = json::parse(read_text_file(r.dir / "reports" / "rank.json"));
  CHECK(j["rows"].size() == 5 * 2 * 3);
  for (const auto& row : j["rows"]) {
    std::set<int> ranks;
    for (const auto& [m, k] : row["ranks"].items()) ranks.insert(k.get<int>());
    CHECK(ranks == std::set<int>{1, 2, 3});
  }

  auto single = base;
  single.methods = {"Baseline"};
  const auto r1 = cmd_rank(single, runs);
  const auto j1 = json::parse(read_text_file(r1.dir / "reports" / "rank.json"));
  for (const auto& row : j1["rows"])
    for (const auto& [m, k] : row["ranks"].items()) CHECK(k == 1);
}

TEST_CASE("measure comparison") {
  const auto cfg = tiny("measures", R"("methods":["Baseline","Ensemble"])");
  const auto r = cmd_run(cfg);
  // An ensemble of identical members has zero variance everywhere.
  const auto one = read_predictions_csv_file((r.dir / "predictions" / "Baseline__t0__id.csv").string(), "Baseline");
  std::vector<double> dup;
  for (std::size_t i = 0; i < one.size(); ++i)
    for (int m = 0; m < 3; ++m)
      for (double v : one.row(i, 0)) dup.push_back(v);
  write_text_file(r.dir / "predictions" / "Dup__t0__id.csv",
                  predictions_csv(PredictionSet("Dup", one.samples(), 3, 2, dup)));
  const auto out = cmd_compare_measures(cfg, r.dir);
  const auto j = json::parse(read_text_file(r.dir / "measures" / "measures.json"));
  CHECK(j["binary_confidence_equals_entropy"] == true);
  bool saw_dup = false, saw_single = false;
  for (const auto& row : j["rows"]) {
    CHECK(row["confidence"].get<double>() == row["normed_entropy"].get<double>());
    if (row["method"] == "Dup") {
      saw_dup = true;
      CHECK(row["note"].get<std::string>().find("zero") != std::string::npos);
    }
    if (row["method"] == "Baseline") {
      saw_single = true;
      CHECK(row["variance"].is_null());
    }
  }
  CHECK(saw_dup);
  CHECK(saw_single);
  CHECK(verify_manifest(r.dir).empty());
}

TEST_CASE("noise suite variants") {
  const auto cfg = tiny("noise", R"("methods":["Baseline"])");
  const auto r = cmd_noise_suite(cfg);
  const auto j = json::parse(read_text_file(r.dir / "reports" / "summary.json"));
  std::set<std::string> names;
  for (const auto& v : j["variants"]) names.insert(v["variant"].get<std::string>());
  CHECK(names == std::set<std::string>{"25%", "0%", "Uniform", "Border"});

  for (const auto& v : j["variants"])
    if (v["variant"] == "Uniform" || v["variant"] == "Border") CHECK(v["flipped"].get<int>() > 0);

  // Noisy variants are scored against the untouched labels of the 0% data.
  for (const char* part : {"id", "ood"}) {
    const std::string f = std::string("Baseline__t0__") + part + ".csv";
    const auto clean = true_labels(read_predictions_csv_file((r.dir / "t0" / "predictions" / f).string(), "b"));
    for (const char* variant : {"uniform", "border"})
      CHECK(true_labels(read_predictions_csv_file((r.dir / variant / "predictions" / f).string(), "b")) == clean);
  }
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { ++hits[i]; });
  for (int h : hits) CHECK(h == 1);
}
