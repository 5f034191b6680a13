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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "suq.h"

namespace fs = std::filesystem;

TEST_CASE("version and status names") {
  CHECK(std::string(suq_version()).size() > 0);
  CHECK(std::string(suq_status_name(SUQ_OK)) == "ok");
  CHECK(std::string(suq_status_name(SUQ_ERR_CONFIG)).size() > 0);
}

TEST_CASE("metric entry points") {
  const double conf[] = {0.6, 0.7};
  const int ok[] = {1, 0};
  double e = -1.0;
  CHECK(suq_ece(conf, ok, 2, 2, &e) == SUQ_OK);
  CHECK(e == doctest::Approx(0.15));
  CHECK(suq_ece(conf, ok, 2, 0, &e) != SUQ_OK);
  CHECK(std::string(suq_last_error()).size() > 0);

  const double pos[] = {0.8, 0.3}, neg[] = {0.5, 0.1};
  double a = 0.0;
  CHECK(suq_auroc(pos, 2, neg, 2, &a) == SUQ_OK);
  CHECK(a == 0.75);
  CHECK(suq_auroc(pos, 2, neg, 0, &a) == SUQ_ERR_INVALID_ARGUMENT);

  const double unc[] = {0.1, 0.2, 0.9, 0.3};
  const int pred[] = {1, 1, 0, 1}, truth[] = {1, 1, 1, 1};
  double values[4], area = 0.0;
  CHECK(suq_reject_curve(unc, pred, truth, 4, 0, values, &area) == SUQ_OK);
  CHECK(values[0] == 0.75);
  CHECK(values[1] == 1.0);
  CHECK(area == doctest::Approx(0.9375));
  CHECK(suq_reject_curve(nullptr, pred, truth, 4, 0, values, &area) == SUQ_ERR_INVALID_ARGUMENT);
}

TEST_CASE("prediction handles") {
  const fs::path dir = "capi_test_out";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path csv = dir / "set.csv";
  std::ofstream(csv) << "sample_id,slide_id,center_id,label,draw,p0,p1\n"
                        "0,0,0,0,0,0.9,0.1\n0,0,0,0,1,0.7,0.3\n"
                        "1,0,0,1,0,0.4,0.6\n1,0,0,1,1,0.2,0.8\n";
  suq_predictions* set = nullptr;
  REQUIRE(suq_predictions_read_csv(csv.string().c_str(), "MCDO", &set) == SUQ_OK);
  CHECK(suq_predictions_size(set) == 2);
  CHECK(suq_predictions_draws(set) == 2);
  CHECK(suq_predictions_classes(set) == 2);
  double mean[4];
  CHECK(suq_predictions_mean(set, mean) == SUQ_OK);
  CHECK(mean[0] == doctest::Approx(0.8));
  CHECK(mean[3] == doctest::Approx(0.7));
  int p[2], t[2];
  CHECK(suq_predictions_labels(set, p, t) == SUQ_OK);
  CHECK(p[0] == 0);
  CHECK(t[1] == 1);
  double u[2];
  CHECK(suq_predictions_uncertainty(set, "confidence", u) == SUQ_OK);
  CHECK(u[0] == doctest::Approx(0.2));
  CHECK(suq_predictions_uncertainty(set, "variance", u) == SUQ_OK);
  CHECK(u[0] == doctest::Approx(0.01));
  CHECK(suq_predictions_uncertainty(set, "bogus", u) != SUQ_OK);
  const fs::path copy = dir / "copy.csv";
  CHECK(suq_predictions_write_csv(set, copy.string().c_str()) == SUQ_OK);
  suq_predictions_free(set);

  std::ifstream a(csv), b(copy);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  CHECK(suq_predictions_read_csv((dir / "missing.csv").string().c_str(), "m", &set) == SUQ_ERR_IO);
  std::ofstream(dir / "bad.csv") << "sample_id,slide_id\n";
  CHECK(suq_predictions_read_csv((dir / "bad.csv").string().c_str(), "m", &set) == SUQ_ERR_PARSE);
  suq_predictions_free(nullptr);
}

TEST_CASE("commands through the C interface") {
  const std::string out = "capi_test_out/runs";
  suq_options o{};
  o.config_json =
      R"({"methods":["Baseline"],"trials":1,"data":{"slides_per_center":3,"grid_width":6,"grid_height":6},)"
      R"("train":{"max_epochs":1,"hidden":[4]}})";
  o.out_dir = out.c_str();
  o.jobs = 1;
  suq_report* r = nullptr;
  REQUIRE(suq_run(&o, &r) == SUQ_OK);
  const std::string dir = suq_report_dir(r);
  CHECK(std::string(suq_report_json(r)).find("prediction_files") != std::string::npos);
  CHECK(dir.rfind(out, 0) == 0);
  suq_report_free(r);

  const char* inputs[] = {dir.c_str()};
  REQUIRE(suq_evaluate(&o, inputs, 1, &r) == SUQ_OK);
  suq_report_free(r);
  CHECK(suq_verify_manifest(dir.c_str()) == SUQ_OK);
  std::ofstream(fs::path(dir) / "reports" / "summary.json", std::ios::app) << "x";
  CHECK(suq_verify_manifest(dir.c_str()) != SUQ_OK);

  suq_options bad = o;
  bad.config_json = R"({"trials":"five"})";
  CHECK(suq_run(&bad, &r) == SUQ_ERR_CONFIG);
  CHECK(std::string(suq_last_error()).size() > 0);
  CHECK(suq_evaluate(&o, nullptr, 1, &r) == SUQ_ERR_INVALID_ARGUMENT);
}
