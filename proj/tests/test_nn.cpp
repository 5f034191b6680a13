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
#include "oracles.hpp"
#include "suq/common.hpp"
#include "suq/nn.hpp"
#include "suq/sampling.hpp"

using namespace suq;
using namespace suq::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

// make_mlp starts biases at zero, which can park a pre-activation exactly on
// the ReLU kink where finite differences are meaningless.
void randomize_biases(Network& net, Rng& rng) {
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& l : net.mutable_layers()) {
    if (auto* d = std::get_if<DenseLayer>(&l)) {
      for (Eigen::Index i = 0; i < d->bias.size(); ++i) d->bias(i) = n(rng);
    } else if (auto* v = std::get_if<VariationalDenseLayer>(&l)) {
      for (Eigen::Index i = 0; i < v->bias_mean.size(); ++i) v->bias_mean(i) = n(rng);
    }
  }
}

std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
  std::uniform_int_distribution<int> d(0, classes - 1);
  std::vector<int> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

// Two Gaussian blobs far apart along the first axis.
LabeledData blobs(std::size_t n, Rng& rng) {
  std::normal_distribution<double> z(0.0, 0.5);
  LabeledData d;
  d.features.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    d.features(static_cast<Eigen::Index>(i), 0) = (c ? 3.0 : -3.0) + z(rng);
    d.features(static_cast<Eigen::Index>(i), 1) = z(rng);
    d.labels.push_back(c);
  }
  return d;
}

}  // namespace

TEST_CASE("softmax of a one-layer identity net") {
  DenseLayer d;
  d.weights = Matrix::Identity(2, 2);
  d.bias = RowVector::Zero(2);
  Network net({d});
  Matrix x(1, 2);
  x << 2.0, 0.0;
  const Matrix p = net.forward(x, Mode::kEval, nullptr);
  CHECK(p(0, 0) == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(p(0, 1) == doctest::Approx(0.1192).epsilon(1e-3));
  CHECK(p.row(0).sum() == doctest::Approx(1.0));
}

TEST_CASE("softmax survives huge logits") {
  Matrix l(1, 3);
  l << 1000.0, 999.0, -1000.0;
  const Matrix p = softmax_rows(l);
  CHECK(std::isfinite(p(0, 0)));
  CHECK(p.row(0).sum() == doctest::Approx(1.0));
}

TEST_CASE("cross entropy closed forms") {
  Matrix p(2, 2);
  p << 0.9, 0.1, 0.2, 0.8;
  const std::vector<int> y = {0, 1};
  CHECK(cross_entropy_loss(p, y) == doctest::Approx((-std::log(0.9) - std::log(0.8)) / 2));
  Matrix onehot(1, 2);
  onehot << 1.0, 0.0;
  const std::vector<int> y0 = {0};
  CHECK(cross_entropy_loss(onehot, y0) == doctest::Approx(0.0));
  Matrix zero(1, 2);
  zero << 0.0, 1.0;
  CHECK(std::isfinite(cross_entropy_loss(zero, y0)));
  const std::vector<int> bad = {2};
  CHECK_THROWS_AS(cross_entropy_loss(onehot, bad), InvalidArgument);
}

TEST_CASE("KL divergence against quadrature") {
  const std::vector<double> m1 = {1.0}, s1 = {1.0};
  CHECK(kl_gaussian_to_standard_normal(m1, s1) == doctest::Approx(0.5).epsilon(1e-12));
  const std::vector<double> m2 = {0.0}, s2 = {2.0};
  CHECK(kl_gaussian_to_standard_normal(m2, s2) ==
        doctest::Approx((4.0 - 1.0 - std::log(4.0)) / 2).epsilon(1e-12));
  CHECK(std::abs(oracle::kl_quadrature(0.0, 2.0) - 0.8068528194400547) < 1e-6);

  Rng rng(11);
  std::uniform_real_distribution<double> mu(-2.0, 2.0), sigma(0.2, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> m = {mu(rng)}, s = {sigma(rng)};
    worst = std::max(worst, std::abs(kl_gaussian_to_standard_normal(m, s) - oracle::kl_quadrature(m[0], s[0])));
  }
  CHECK(worst < 1e-6);
  const std::vector<double> neg = {-1.0};
  CHECK_THROWS_AS(kl_gaussian_to_standard_normal(m1, neg), DomainError);
}

TEST_CASE("elbo formula") {
  CHECK(elbo_loss(1.0, 10.0, 1.0, 10) == doctest::Approx(2.0));
}

TEST_CASE("flipout mean matches the mean forward") {
  Rng rng(3);
  const Matrix x = random_matrix(1, 4, rng);
  const Matrix mu = random_matrix(3, 4, rng);
  const Matrix sigma = Matrix::Constant(3, 4, 0.3);
  const RowVector bm = RowVector::Zero(3);
  const RowVector bs = RowVector::Constant(3, 0.3);
  const int draws = 10000;
  Matrix sum = Matrix::Zero(1, 3), sq = Matrix::Zero(1, 3);
  for (int i = 0; i < draws; ++i) {
    const Matrix y = flipout_forward(x, mu, sigma, bm, bs, rng);
    sum += y;
    sq += y.cwiseProduct(y);
  }
  const Matrix mean = sum / draws;
  const Matrix det = x * mu.transpose();
  for (int j = 0; j < 3; ++j) {
    const double var = sq(0, j) / draws - mean(0, j) * mean(0, j);
    CHECK(std::abs(mean(0, j) - det(0, j)) < 5.0 * std::sqrt(var / draws));
  }

  const Matrix zero = Matrix::Zero(3, 4);
  const RowVector zb = RowVector::Zero(3);
  const Matrix y0 = flipout_forward(x, mu, zero, bm, zb, rng);
  CHECK((y0 - det).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("flipout spread grows with sigma") {
  Rng rng(5);
  const Matrix x = random_matrix(1, 4, rng);
  const Matrix mu = random_matrix(2, 4, rng);
  const RowVector b = RowVector::Zero(2);
  auto spread = [&](double s) {
    Rng r(9);
    std::vector<double> v;
    for (int i = 0; i < 1000; ++i)
      v.push_back(flipout_forward(x, mu, Matrix::Constant(2, 4, s), b, RowVector::Constant(2, s), r)(0, 0));
    double m = 0.0, q = 0.0;
    for (double a : v) m += a;
    m /= v.size();
    for (double a : v) q += (a - m) * (a - m);
    return q / (v.size() - 1);
  };
  CHECK(spread(0.4) > spread(0.2));
}

TEST_CASE("dropout") {
  Rng rng(1);
  const Matrix x = Matrix::Constant(4, 5, 2.0);
  for (Mode m : {Mode::kEval, Mode::kTrain}) {
    CHECK(dropout_forward(DropoutSpec{0.0}, x, m, &rng) == x);
  }
  CHECK(dropout_forward(DropoutSpec{0.5}, x, Mode::kEval, &rng) == x);
  CHECK_THROWS_AS(dropout_forward(DropoutSpec{1.0}, x, Mode::kTrain, &rng), DomainError);

  const Matrix one = Matrix::Constant(1, 3, 1.5);
  Matrix sum = Matrix::Zero(1, 3);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) sum += dropout_forward(DropoutSpec{0.5}, one, Mode::kTrain, &rng);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(sum(0, j) / draws - 1.5) < 0.015);
}

TEST_CASE("plateau scheduler trace") {
  PlateauScheduler s(1e-3, 3, 0.1);
  const std::vector<double> trace = {1.0, 0.9, 0.91, 0.92, 0.93};
  std::vector<bool> reduced;
  for (double v : trace) reduced.push_back(s.step(v));
  CHECK(reduced == std::vector<bool>{false, false, false, false, true});
  CHECK(s.reductions() == 1);
  CHECK(s.learning_rate() == doctest::Approx(1e-4));
}

TEST_CASE("adam first step moves each parameter by lr against the gradient sign") {
  std::vector<double> p = {1.0, -2.0, 0.5};
  AdamState adam;
  const Gradients g = {{0.3, -4.0, 0.0}};
  adam.apply({std::span<double>(p)}, g, 0.01);
  CHECK(p[0] == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-1.99).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(0.5));
}

TEST_CASE("gradient check on random networks") {
  Rng rng(2024);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    MlpSpec spec;
    spec.input_width = 3 + t % 3;
    spec.hidden = {5 + t % 4, 4};
    spec.classes = 2 + t % 2;
    spec.kind = t % 2 ? MlpSpec::Kind::kVariational : MlpSpec::Kind::kDeterministic;
    spec.initial_sigma = 0.05;
    spec.prior_weight = 0.5;
    Network net = Network::make_mlp(spec, rng);
    randomize_biases(net, rng);
    const Matrix x = random_matrix(6, spec.input_width, rng);
    const auto y = random_labels(6, spec.classes, rng);
    const auto res = gradient_check(net, x, y, 1e-5, rng, spec.kind == MlpSpec::Kind::kVariational ? 0.1 : 0.0);
    CHECK(res.checked == net.parameter_count());
    worst = std::max(worst, res.max_relative_error);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gradient check with the standard finite-difference step") {
  Rng rng(77);
  MlpSpec spec;
  spec.input_width = 4;
  spec.hidden = {6};
  Network net = Network::make_mlp(spec, rng);
  randomize_biases(net, rng);
  const Matrix x = random_matrix(5, 4, rng);
  const auto y = random_labels(5, 2, rng);
  CHECK(gradient_check(net, x, y, 1e-4, rng).max_relative_error < 1e-4);
}

TEST_CASE("variational layer with zero sigma equals its mean network") {
  Rng rng(8);
  MlpSpec spec;
  spec.input_width = 3;
  spec.hidden = {4};
  spec.kind = MlpSpec::Kind::kVariational;
  Network net = Network::make_mlp(spec, rng);
  for (auto& l : net.mutable_layers()) {
    if (auto* v = std::get_if<VariationalDenseLayer>(&l)) {
      v->weight_rho.setConstant(-1000.0);
      v->bias_rho.setConstant(-1000.0);
    }
  }
  const Matrix x = random_matrix(4, 3, rng);
  const Matrix a = net.forward(x, Mode::kEval, nullptr);
  const Matrix b = net.forward(x, Mode::kTrain, &rng);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("training separates two blobs") {
  Rng rng(4);
  const LabeledData tr = blobs(200, rng);
  const LabeledData va = blobs(100, rng);
  MlpSpec spec;
  spec.input_width = 2;
  spec.hidden = {16, 16};
  Network net = Network::make_mlp(spec, rng);
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-2;
  cfg.seed = 1;
  const auto res = train(net, tr, va, cfg);
  CHECK(res.history.size() <= 50);
  double best = 0.0;
  for (const auto& e : res.history) best = std::max(best, e.val_accuracy);
  CHECK(best == 1.0);
  CHECK(res.history[static_cast<std::size_t>(res.best_epoch - 1)].val_accuracy == best);
}

TEST_CASE("training is reproducible for a fixed seed") {
  Rng r1(4), r2(4);
  const LabeledData tr = blobs(64, r1);
  blobs(64, r2);
  MlpSpec spec;
  spec.input_width = 2;
  spec.hidden = {8};
  spec.kind = MlpSpec::Kind::kDropout;
  Rng a(1), b(1);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.seed = 5;
  const auto x = train(Network::make_mlp(spec, a), tr, tr, cfg);
  const auto y = train(Network::make_mlp(spec, b), tr, tr, cfg);
  CHECK(x.network == y.network);
}

TEST_CASE("network serialization round trip") {
  Rng rng(6);
  for (auto kind : {MlpSpec::Kind::kDeterministic, MlpSpec::Kind::kDropout, MlpSpec::Kind::kVariational}) {
    MlpSpec spec;
    spec.input_width = 3;
    spec.hidden = {4, 3};
    spec.kind = kind;
    spec.input_mean = RowVector::Constant(3, 0.25);
    spec.input_std = RowVector::Constant(3, 2.0);
    const Network net = Network::make_mlp(spec, rng);
    std::stringstream ss;
    save_network(net, ss);
    const Network back = load_network(ss);
    CHECK(back == net);
  }
  std::stringstream junk("not a network");
  CHECK_THROWS_AS(load_network(junk), ParseError);
}

TEST_CASE("shape mismatch is reported") {
  Rng rng(1);
  MlpSpec spec;
  spec.input_width = 3;
  const Network net = Network::make_mlp(spec, rng);
  CHECK_THROWS_AS(net.forward(Matrix::Zero(2, 4), Mode::kEval, nullptr), ShapeError);
}

TEST_CASE("balanced batches") {
  Rng rng(12);
  for (int ratio : {1, 9}) {
    std::vector<int> labels;
    for (int i = 0; i < 1000; ++i) labels.push_back(i % (ratio + 1) == 0 ? 1 : 0);
    BalancedBatchSampler s(labels, 2, 128);
    std::size_t ones = 0, total = 0;
    for (int b = 0; b < 1000; ++b) {
      for (auto i : s.next(rng)) {
        ones += labels[i];
        ++total;
      }
    }
    CHECK(std::abs(static_cast<double>(ones) / total - 0.5) < 0.02);
  }
  TrainConfig cfg;
  CHECK(cfg.batch_size == 128);
}
