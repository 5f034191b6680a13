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

#include "suq/slide_agg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "suq/measures.hpp"
#include "suq/sampling.hpp"

namespace suq::slide {
namespace {

using nn::Matrix;
using nn::RowVector;

std::size_t top_count(double q, std::size_t n) {
  if (!(q > 0.0 && q <= 1.0)) throw DomainError("top-q fraction must lie in (0, 1]");
  // Guard against q * n landing a rounding step above an integer.
  auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

std::vector<double> average_top(const std::vector<std::vector<double>>& means, double q) {
  if (means.empty()) throw InvalidArgument("cannot aggregate an empty slide");
  std::vector<std::size_t> order(means.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> conf(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) conf[i] = confidence(means[i]);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
  const std::size_t k = top_count(q, means.size());
  std::vector<double> avg(means.front().size(), 0.0);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < avg.size(); ++c) avg[c] += means[order[r]][c];
  for (auto& v : avg) v /= static_cast<double>(k);
  return avg;
}

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(RowVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

std::vector<double> to_vector(const Matrix& m) { return {m.data(), m.data() + m.size()}; }
std::vector<double> to_vector(const RowVector& v) { return {v.data(), v.data() + v.size()}; }

Matrix he_matrix(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix glorot_matrix(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (rows + cols)));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

double bag_loss(const MilOutput& out, int label) {
  return -std::log(std::max(out.probs.at(static_cast<std::size_t>(label)), nn::kProbabilityFloor));
}

int argmax(const std::vector<double>& p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace

ConfidenceMap stitch_confidence_map(std::int64_t slide_id, int width, int height,
                                    std::span<const int> xs, std::span<const int> ys,
                                    std::span<const double> tumor_probability) {
  if (width < 1 || height < 1) throw InvalidArgument("confidence map needs a positive grid");
  if (xs.size() != ys.size() || xs.size() != tumor_probability.size())
    throw ShapeError("tile coordinate and probability counts differ");
  ConfidenceMap map;
  map.slide_id = slide_id;
  map.width = width;
  map.height = height;
  map.values.assign(static_cast<std::size_t>(width) * height, kSentinel);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] < 0 || xs[i] >= width || ys[i] < 0 || ys[i] >= height)
      throw DomainError("tile coordinate outside the slide grid");
    const double p = tumor_probability[i];
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("tumor probability outside [0, 1]");
    double& cell = map.values[static_cast<std::size_t>(ys[i]) * width + xs[i]];
    if (cell != kSentinel) throw InvalidArgument("duplicate tile coordinate in slide");
    cell = p;
  }
  return map;
}

void write_pgm(const ConfidenceMap& map, std::ostream& out) {
  out << "P2\n" << map.width << ' ' << map.height << "\n255\n";
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const double v = map.at(x, y);
      out << (x ? " " : "") << (v == kSentinel ? 0 : static_cast<int>(std::lround(255.0 * v)));
    }
    out << '\n';
  }
}

void write_mask_pgm(const ConfidenceMap& map, std::ostream& out) {
  out << "P2\n" << map.width << ' ' << map.height << "\n255\n";
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) out << (x ? " " : "") << (map.at(x, y) == kSentinel ? 0 : 255);
    out << '\n';
  }
}

void write_map_csv(const ConfidenceMap& map, std::ostream& out) {
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      if (x) out << ',';
      const double v = map.at(x, y);
      if (v != kSentinel) out << format_double(v);
    }
    out << '\n';
  }
}

SlidePrediction aggregate_top_q(const PredictionSet& tiles, double q, std::int64_t slide_id) {
  std::vector<std::vector<double>> means;
  for (std::size_t i = 0; i < tiles.size(); ++i) means.push_back(mean_prediction(tiles, i));
  SlidePrediction sp;
  sp.slide_id = slide_id;
  sp.probs = average_top(means, q);
  sp.uncertainty = 1.0 - confidence(sp.probs);
  sp.method = tiles.method();
  return sp;
}

PredictionSet aggregate_slides(const PredictionSet& tiles, double q,
                               const std::vector<std::pair<std::int64_t, int>>& slide_labels,
                               const std::string& method) {
  std::map<std::int64_t, std::vector<std::vector<double>>> groups;
  for (std::size_t i = 0; i < tiles.size(); ++i)
    groups[tiles.sample(i).slide_id].push_back(mean_prediction(tiles, i));
  std::map<std::int64_t, int> labels(slide_labels.begin(), slide_labels.end());
  std::vector<SampleInfo> info;
  std::vector<double> probs;
  for (const auto& [slide_id, means] : groups) {
    SampleInfo s;
    s.sample_id = slide_id;
    s.slide_id = slide_id;
    if (auto it = labels.find(slide_id); it != labels.end()) s.label = it->second;
    info.push_back(s);
    const auto avg = average_top(means, q);
    probs.insert(probs.end(), avg.begin(), avg.end());
  }
  return PredictionSet(method, std::move(info), 1, tiles.classes(), std::move(probs));
}

AttentionMilHead AttentionMilHead::make(int features, int embed, int attention, int classes,
                                        double dropout_p, Rng& rng) {
  if (features < 1 || embed < 1 || attention < 1 || classes < 2)
    throw InvalidArgument("attention head dimensions must be positive with at least 2 classes");
  AttentionMilHead h;
  h.w1 = he_matrix(embed, features, rng);
  h.b1 = RowVector::Zero(embed);
  h.v = glorot_matrix(attention, embed, rng);
  h.bv = RowVector::Zero(attention);
  h.u = glorot_matrix(attention, embed, rng);
  h.bu = RowVector::Zero(attention);
  h.w = glorot_matrix(1, attention, rng);
  h.wc = glorot_matrix(classes, embed, rng);
  h.bc = RowVector::Zero(classes);
  h.dropout_p = dropout_p;
  h.validate();
  return h;
}

void AttentionMilHead::validate() const {
  const auto d = w1.rows();
  const auto a = v.rows();
  if (b1.size() != d || v.cols() != d || u.rows() != a || u.cols() != d || bv.size() != a ||
      bu.size() != a || w.size() != a || wc.cols() != d || bc.size() != wc.rows() || wc.rows() < 2)
    throw ShapeError("attention head shapes are inconsistent");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw DomainError("dropout p must lie in [0, 1)");
}

std::vector<std::span<double>> AttentionMilHead::parameters() {
  return {span_of(w1), span_of(b1), span_of(v), span_of(bv), span_of(u),
          span_of(bu), span_of(w),  span_of(wc), span_of(bc)};
}

MilOutput attention_mil_forward(const AttentionMilHead& head, const Matrix& bag, nn::Mode mode,
                                Rng* rng, MilTape* tape) {
  if (bag.rows() == 0) throw InvalidArgument("attention pooling needs a non-empty bag");
  if (bag.cols() != head.w1.cols()) throw ShapeError("bag feature width does not match the head");
  if (!bag.allFinite()) throw NumericError("bag contains non-finite features");
  const Eigen::Index n = bag.rows();

  Matrix pre1 = (bag * head.w1.transpose()).rowwise() + head.b1;
  Matrix h = pre1.cwiseMax(0.0);
  Matrix mask = Matrix::Ones(n, h.cols());
  if (mode == nn::Mode::kTrain && head.dropout_p > 0.0) {
    if (!rng) throw InvalidArgument("train-mode dropout needs an rng");
    std::bernoulli_distribution keep(1.0 - head.dropout_p);
    const double scale = 1.0 / (1.0 - head.dropout_p);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? scale : 0.0;
    h = h.cwiseProduct(mask);
  }
  Matrix ga = ((h * head.v.transpose()).rowwise() + head.bv).array().tanh().matrix();
  Matrix gg = ((h * head.u.transpose()).rowwise() + head.bu)
                  .unaryExpr([](double z) { return nn::sigmoid(z); });
  Eigen::VectorXd scores = ga.cwiseProduct(gg) * head.w.transpose();
  const double top = scores.maxCoeff();
  Eigen::VectorXd a = (scores.array() - top).exp().matrix();
  a /= a.sum();
  RowVector pooled = a.transpose() * h;
  RowVector logits = pooled * head.wc.transpose() + head.bc;
  Matrix probs = nn::softmax_rows(Matrix(logits));

  MilOutput out;
  out.probs.assign(probs.data(), probs.data() + probs.size());
  out.attention.assign(a.data(), a.data() + a.size());
  if (tape) {
    tape->x = bag;
    tape->pre1 = std::move(pre1);
    tape->mask = std::move(mask);
    tape->h = std::move(h);
    tape->gate_a = std::move(ga);
    tape->gate_g = std::move(gg);
    tape->attention = out.attention;
    tape->pooled.assign(pooled.data(), pooled.data() + pooled.size());
  }
  return out;
}

nn::Gradients attention_mil_backward(const AttentionMilHead& head, const MilTape& tape,
                                     const MilOutput& out, int label) {
  const auto c = static_cast<Eigen::Index>(out.probs.size());
  if (label < 0 || label >= c) throw InvalidArgument("bag label out of range");
  const Eigen::Index n = tape.h.rows();

  RowVector dlogits = Eigen::Map<const RowVector>(out.probs.data(), c);
  dlogits(label) -= 1.0;
  const Eigen::Map<const RowVector> pooled(tape.pooled.data(), static_cast<Eigen::Index>(tape.pooled.size()));
  const Eigen::Map<const Eigen::VectorXd> a(tape.attention.data(), n);

  Matrix dwc = dlogits.transpose() * pooled;
  RowVector dbc = dlogits;
  RowVector dz = dlogits * head.wc;

  Matrix dh = a * dz;
  Eigen::VectorXd da = tape.h * dz.transpose();
  const double mean_da = a.dot(da);
  Eigen::VectorXd ds = a.cwiseProduct((da.array() - mean_da).matrix());

  Matrix gated = tape.gate_a.cwiseProduct(tape.gate_g);
  RowVector dw = ds.transpose() * gated;
  Matrix dgated = ds * head.w;
  Matrix dpre_v = dgated.cwiseProduct(tape.gate_g)
                      .cwiseProduct((1.0 - tape.gate_a.array().square()).matrix());
  Matrix dpre_u = dgated.cwiseProduct(tape.gate_a)
                      .cwiseProduct(tape.gate_g.cwiseProduct((1.0 - tape.gate_g.array()).matrix()));
  Matrix dv = dpre_v.transpose() * tape.h;
  RowVector dbv = dpre_v.colwise().sum();
  Matrix du = dpre_u.transpose() * tape.h;
  RowVector dbu = dpre_u.colwise().sum();
  dh += dpre_v * head.v + dpre_u * head.u;

  Matrix dpre1 = dh.cwiseProduct(tape.mask);
  for (Eigen::Index i = 0; i < dpre1.size(); ++i)
    if (!(tape.pre1.data()[i] > 0.0)) dpre1.data()[i] = 0.0;
  Matrix dw1 = dpre1.transpose() * tape.x;
  RowVector db1 = dpre1.colwise().sum();

  return {to_vector(dw1), to_vector(db1), to_vector(dv), to_vector(dbv), to_vector(du),
          to_vector(dbu), to_vector(dw),  to_vector(dwc), to_vector(dbc)};
}

void MilTrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("MIL learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("MIL weight decay must be non-negative");
  if (min_epochs < 0 || max_epochs < 1 || min_epochs > max_epochs)
    throw ConfigError("MIL epoch bounds must satisfy 0 <= min <= max, max >= 1");
  if (patience < 1) throw ConfigError("MIL patience must be positive");
}

MilTrainResult train_mil(AttentionMilHead head, std::span<const Bag> train_bags,
                         std::span<const Bag> val_bags, const MilTrainConfig& config) {
  config.validate();
  head.validate();
  auto check_classes = [&](std::span<const Bag> bags, const char* what) {
    std::vector<int> seen(head.classes(), 0);
    for (const auto& b : bags) {
      if (b.label < 0 || b.label >= head.classes()) throw InvalidArgument("bag label out of range");
      seen[b.label] = 1;
    }
    if (std::count(seen.begin(), seen.end(), 1) < head.classes())
      throw InvalidArgument(std::string("every slide class must appear in the ") + what + " bags");
  };
  check_classes(train_bags, "training");
  check_classes(val_bags, "validation");

  std::vector<int> labels;
  for (const auto& b : train_bags) labels.push_back(b.label);
  const std::vector<double> weights = inverse_frequency_weights(labels);

  Rng rng(derive_seed(config.seed, "mil-train"));
  nn::AdamState adam;
  MilTrainResult result;
  result.head = head;
  double best = INFINITY;
  int since_best = 0;
  MilTape tape;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double train_loss = 0.0;
    const auto order = weighted_sample(weights, train_bags.size(), rng);
    for (std::size_t idx : order) {
      const Bag& bag = train_bags[idx];
      const MilOutput out = attention_mil_forward(head, bag.features, nn::Mode::kTrain, &rng, &tape);
      train_loss += bag_loss(out, bag.label);
      nn::Gradients g = attention_mil_backward(head, tape, out, bag.label);
      auto params = head.parameters();
      if (config.weight_decay > 0.0)
        for (std::size_t k = 0; k < params.size(); ++k)
          for (std::size_t i = 0; i < params[k].size(); ++i) g[k][i] += config.weight_decay * params[k][i];
      adam.apply(params, g, config.learning_rate);
    }
    MilEpoch rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss / static_cast<double>(train_bags.size());
    std::size_t correct = 0;
    for (const auto& bag : val_bags) {
      const MilOutput out = attention_mil_forward(head, bag.features, nn::Mode::kEval, nullptr);
      rec.val_loss += bag_loss(out, bag.label);
      correct += argmax(out.probs) == bag.label;
    }
    rec.val_loss /= static_cast<double>(val_bags.size());
    rec.val_accuracy = static_cast<double>(correct) / static_cast<double>(val_bags.size());
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss))
      throw NumericError("MIL training diverged at epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    result.stopped_epoch = epoch;
    if (rec.val_loss < best) {
      best = rec.val_loss;
      since_best = 0;
      result.head = head;
      result.best_epoch = epoch;
    } else {
      ++since_best;
    }
    if (epoch >= config.min_epochs && since_best >= config.patience) break;
  }
  return result;
}

PredictionSet mil_predict_ensemble(std::span<const AttentionMilHead> heads, std::span<const Bag> bags,
                                   const std::string& method) {
  if (heads.empty()) throw InvalidArgument("ensemble needs at least one head");
  std::vector<SampleInfo> info;
  std::vector<double> probs;
  for (const auto& bag : bags) {
    info.push_back({bag.slide_id, bag.slide_id, bag.center_id, bag.label});
    for (const auto& head : heads) {
      const auto out = attention_mil_forward(head, bag.features, nn::Mode::kEval, nullptr);
      probs.insert(probs.end(), out.probs.begin(), out.probs.end());
    }
  }
  return PredictionSet(method, std::move(info), heads.size(),
                       static_cast<std::size_t>(heads.front().classes()), std::move(probs));
}

PredictionSet mil_predict_mcdo(const AttentionMilHead& head, std::span<const Bag> bags, int n_samples,
                               Rng& rng, const std::string& method) {
  if (n_samples < 1) throw InvalidArgument("MC dropout needs at least one sample");
  std::vector<SampleInfo> info;
  std::vector<double> probs;
  for (const auto& bag : bags) {
    info.push_back({bag.slide_id, bag.slide_id, bag.center_id, bag.label});
    for (int s = 0; s < n_samples; ++s) {
      const auto out = attention_mil_forward(head, bag.features, nn::Mode::kTrain, &rng);
      probs.insert(probs.end(), out.probs.begin(), out.probs.end());
    }
  }
  return PredictionSet(method, std::move(info), static_cast<std::size_t>(n_samples),
                       static_cast<std::size_t>(head.classes()), std::move(probs));
}

}  // namespace suq::slide
