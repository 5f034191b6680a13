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
#include <sstream>
#include <vector>

#include "doctest.h"
#include "suq/common.hpp"
#include "suq/methods.hpp"
#include "suq/nn.hpp"

using namespace suq;
using namespace suq::nn;

namespace {

std::vector<SampleInfo> infos(std::size_t n) {
  std::vector<SampleInfo> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i].sample_id = static_cast<std::int64_t>(i);
    v[i].slide_id = static_cast<std::int64_t>(i / 3);
    v[i].center_id = static_cast<int>(i % 5);
    v[i].label = static_cast<int>(i % 2);
  }
  return v;
}

Matrix inputs(Eigen::Index n, Eigen::Index f, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix m(n, f);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < f; ++j) m(i, j) = z(rng);
  return m;
}

Network mlp(MlpSpec::Kind kind, std::uint64_t seed, double p = 0.3) {
  Rng rng(seed);
  MlpSpec s;
  s.input_width = 4;
  s.hidden = {8};
  s.kind = kind;
  s.dropout_p = p;
  s.initial_sigma = 0.2;
  return Network::make_mlp(s, rng);
}

bool all_draws_identical(const PredictionSet& set) {
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t s = 1; s < set.draws(); ++s)
      for (std::size_t c = 0; c < set.classes(); ++c)
        if (set.row(i, s)[c] != set.row(i, 0)[c]) return false;
  return true;
}

}  // namespace

TEST_CASE("prediction set validation") {
  CHECK_NOTHROW(PredictionSet("m", infos(1), 1, 2, {0.3, 0.7}));
  CHECK_THROWS_AS(PredictionSet("m", infos(1), 1, 2, {0.3, 0.6}), DomainError);
  CHECK_THROWS_AS(PredictionSet("m", infos(1), 1, 2, {-0.1, 1.1}), DomainError);
  CHECK_THROWS_AS(PredictionSet("m", infos(1), 1, 2, {0.3, 0.7, 0.5}), ShapeError);
  CHECK_THROWS_AS(PredictionSet("m", infos(1), 0, 2, {}), InvalidArgument);
}

TEST_CASE("mean prediction") {
  const PredictionSet a("m", infos(1), 2, 2, {0.2, 0.8, 0.6, 0.4});
  const auto m = mean_prediction(a, 0);
  CHECK(m[0] == doctest::Approx(0.4));
  CHECK(m[1] == doctest::Approx(0.6));
  const PredictionSet one("m", infos(1), 1, 2, {0.3, 0.7});
  CHECK(mean_prediction(one, 0) == std::vector<double>{0.3, 0.7});
  const PredictionSet three("m", infos(1), 3, 2, {0.5, 0.5, 0.4, 0.6, 0.3, 0.7});
  const auto t = mean_prediction(three, 0);
  CHECK(t[0] == doctest::Approx(0.4));
  CHECK(t[1] == doctest::Approx(0.6));
}

TEST_CASE("baseline is deterministic and single draw") {
  const Network net = mlp(MlpSpec::Kind::kDeterministic, 1);
  const Matrix x = inputs(10, 4, 2);
  const auto a = predict_baseline(net, x, infos(10));
  const auto b = predict_baseline(net, x, infos(10));
  CHECK(a == b);
  CHECK(a.draws() == 1);
  CHECK(a.method() == "Baseline");

  Network zero = net;
  for (auto& p : zero.parameters()) std::fill(p.begin(), p.end(), 0.0);
  const auto u = predict_baseline(zero, x, infos(10));
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(u.row(i, 0)[0] == doctest::Approx(0.5));
}

TEST_CASE("ensemble of identical members equals one member") {
  const Network net = mlp(MlpSpec::Kind::kDeterministic, 1);
  const Matrix x = inputs(7, 4, 3);
  const std::vector<Network> members(5, net);
  const auto e = predict_ensemble(members, x, infos(7));
  CHECK(e.draws() == 5);
  const auto b = predict_baseline(net, x, infos(7));
  for (std::size_t i = 0; i < 7; ++i) {
    const auto m = mean_prediction(e, i);
    CHECK(m[0] == doctest::Approx(b.row(i, 0)[0]).epsilon(1e-12));
  }
}

TEST_CASE("MCDO") {
  const Matrix x = inputs(6, 4, 4);
  Rng rng(1);
  const auto with_p0 = predict_mcdo(mlp(MlpSpec::Kind::kDropout, 2, 0.0), x, infos(6), 10, rng);
  CHECK(with_p0.draws() == 10);
  CHECK(all_draws_identical(with_p0));
  const auto real = predict_mcdo(mlp(MlpSpec::Kind::kDropout, 2, 0.3), x, infos(6), 10, rng);
  CHECK_FALSE(all_draws_identical(real));
  CHECK_THROWS_AS(predict_mcdo(mlp(MlpSpec::Kind::kDeterministic, 2), x, infos(6), 10, rng), ConfigError);
}

TEST_CASE("SVI") {
  const Matrix x = inputs(6, 4, 5);
  Network net = mlp(MlpSpec::Kind::kVariational, 3);
  Rng r1(9), r2(9);
  const auto a = predict_svi(net, x, infos(6), 10, r1);
  const auto b = predict_svi(net, x, infos(6), 10, r2);
  CHECK(a == b);
  CHECK_FALSE(all_draws_identical(a));
  for (auto& l : net.mutable_layers()) {
    if (auto* v = std::get_if<VariationalDenseLayer>(&l)) {
      v->weight_rho.setConstant(-1000.0);
      v->bias_rho.setConstant(-1000.0);
    }
  }
  const auto flat = predict_svi(net, x, infos(6), 10, r1);
  CHECK(all_draws_identical(flat));
  CHECK_THROWS_AS(predict_svi(mlp(MlpSpec::Kind::kDeterministic, 2), x, infos(6), 10, r1), ConfigError);
}

TEST_CASE("TTA") {
  const Network net = mlp(MlpSpec::Kind::kDeterministic, 4);
  const Matrix x = inputs(6, 4, 6);
  Rng rng(3);
  CHECK(all_draws_identical(predict_tta(net, x, infos(6), 10, AugmentationSpec::identity(), rng)));
  AugmentationSpec jit;
  jit.scale_lo = jit.scale_hi = 1.0;
  CHECK_FALSE(all_draws_identical(predict_tta(net, x, infos(6), 10, jit, rng)));
}

TEST_CASE("TTA mean on a linear-logit network matches the clean prediction") {
  // Logit difference is linear in the input, so zero-mean jitter averages out
  // at the logit level; compare mean logit difference against the clean one.
  DenseLayer d;
  d.weights = Matrix(2, 3);
  d.weights << 0.4, -0.2, 0.1, -0.4, 0.2, -0.1;
  d.bias = RowVector::Zero(2);
  const Network net({d});
  const Matrix x = inputs(1, 3, 7);
  AugmentationSpec aug;
  aug.scale_lo = aug.scale_hi = 1.0;
  aug.jitter_sigma = 0.5;
  Rng rng(1);
  const auto set = predict_tta(net, x, infos(1), 1000, aug, rng);
  std::vector<double> logit;
  for (std::size_t s = 0; s < set.draws(); ++s) {
    const auto r = set.row(0, s);
    logit.push_back(std::log(r[0] / r[1]));
  }
  double m = 0.0, q = 0.0;
  for (double v : logit) m += v;
  m /= logit.size();
  for (double v : logit) q += (v - m) * (v - m);
  const double se = std::sqrt(q / (logit.size() - 1) / logit.size());
  const double clean = 2.0 * (x.row(0) * d.weights.row(0).transpose())(0, 0);
  CHECK(std::abs(m - clean) < 5.0 * se);
}

TEST_CASE("ensemble of MCDO members") {
  std::vector<Network> members;
  for (int j = 0; j < 5; ++j) members.push_back(mlp(MlpSpec::Kind::kDropout, 10 + j));
  const Matrix x = inputs(4, 4, 8);
  Rng rng(2);
  const auto set = predict_ensemble_of(MethodKind::kMCDO, members, x, infos(4), 10, AugmentationSpec{}, rng);
  CHECK(set.draws() == 50);
}

TEST_CASE("method names") {
  for (std::string n : {"Baseline", "Ensemble", "MCDO", "MCDO-Ensemble", "TTA", "TTA-Ensemble", "SVI",
                        "SVI-Ensemble"}) {
    CHECK(MethodSpec::from_name(n).name() == n);
  }
  CHECK(MethodSpec::from_name("Ensemble").draws() == 5);
  CHECK(MethodSpec::from_name("MCDO").draws() == 10);
  CHECK(MethodSpec::from_name("SVI-Ensemble").draws() == 50);
  CHECK_THROWS_AS(MethodSpec::from_name("Bogus"), ConfigError);
}

TEST_CASE("prediction CSV round trip") {
  const PredictionSet a("MCDO", infos(3), 2, 2, {0.1, 0.9, 0.123456789012345, 0.876543210987655, 1.0 / 3, 2.0 / 3,
                                                 0.5, 0.5, 0.0, 1.0, 0.25, 0.75});
  std::stringstream ss(predictions_csv(a));
  const auto b = read_predictions_csv(ss, "MCDO");
  CHECK(b == a);
  CHECK(predictions_csv(b) == predictions_csv(a));
}

TEST_CASE("prediction CSV errors name the line") {
  std::stringstream bad("sample_id,slide_id,center_id,label,draw,p0,p1\n0,0,0,0,0,0.5,0.5\n1,0,0,1,0,0.5,x\n");
  try {
    read_predictions_csv(bad, "m");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}
