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

#include "suq/methods.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace suq {

void validate_probability_vector(std::span<const double> v) {
  if (v.empty()) throw DomainError("empty probability vector");
  double sum = 0.0;
  for (double p : v) {
    if (!std::isfinite(p) || p < 0.0) throw DomainError("probability entries must be finite and >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance)
    throw DomainError("probability vector sums to " + format_double(sum));
}

PredictionSet::PredictionSet(std::string method, std::vector<SampleInfo> samples,
                             std::size_t draws, std::size_t classes, std::vector<double> probs)
    : method_(std::move(method)), samples_(std::move(samples)), draws_(draws), classes_(classes),
      probs_(std::move(probs)) {
  if (draws_ < 1) throw InvalidArgument("prediction set needs at least one draw");
  if (classes_ < 1) throw InvalidArgument("prediction set needs at least one class");
  if (probs_.size() != samples_.size() * draws_ * classes_)
    throw ShapeError("prediction set: value count does not match samples x draws x classes");
  for (std::size_t r = 0; r < samples_.size() * draws_; ++r)
    validate_probability_vector({probs_.data() + r * classes_, classes_});
}

std::span<const double> PredictionSet::row(std::size_t sample, std::size_t draw) const {
  if (sample >= samples_.size() || draw >= draws_) throw InvalidArgument("prediction set index out of range");
  return {probs_.data() + (sample * draws_ + draw) * classes_, classes_};
}

std::vector<double> mean_prediction(const PredictionSet& set, std::size_t index) {
  std::vector<double> mean(set.classes(), 0.0);
  for (std::size_t s = 0; s < set.draws(); ++s) {
    const auto r = set.row(index, s);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += r[c];
  }
  for (double& m : mean) m /= static_cast<double>(set.draws());
  return mean;
}

std::vector<int> predicted_labels(const PredictionSet& set) {
  std::vector<int> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto m = mean_prediction(set, i);
    out[i] = static_cast<int>(std::max_element(m.begin(), m.end()) - m.begin());
  }
  return out;
}

std::vector<int> true_labels(const PredictionSet& set) {
  std::vector<int> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) out[i] = set.sample(i).label;
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentationSpec AugmentationSpec::identity() {
  AugmentationSpec a;
  a.jitter_sigma = 0.0;
  a.scale_lo = 1.0;
  a.scale_hi = 1.0;
  a.rotate90 = false;
  return a;
}

bool AugmentationSpec::is_identity() const {
  return jitter_sigma == 0.0 && scale_lo == 1.0 && scale_hi == 1.0 && !rotate90;
}

void AugmentationSpec::validate() const {
  if (!(jitter_sigma >= 0.0)) throw InvalidArgument("augmentation: jitter_sigma must be >= 0");
  if (!(scale_lo > 0.0 && scale_hi >= scale_lo))
    throw InvalidArgument("augmentation: scale range must be positive and ordered");
}

namespace {

int grid_side(Eigen::Index width) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(width))));
  return side * side == width ? side : 0;
}

}  // namespace

void augment_features(nn::Matrix& x, const AugmentationSpec& spec, Rng& rng) {
  spec.validate();
  const Eigen::Index width = x.cols();
  if (!spec.feature_std.empty() && static_cast<Eigen::Index>(spec.feature_std.size()) != width)
    throw ShapeError("augmentation: feature_std width differs from input");
  const int side = spec.rotate90 ? grid_side(width) : 0;
  std::uniform_real_distribution<double> gain(spec.scale_lo, spec.scale_hi);
  std::uniform_int_distribution<int> quarter(0, 3);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> tmp(static_cast<std::size_t>(width));

  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (side > 1) {
      const int turns = quarter(rng);
      for (int t = 0; t < turns; ++t) {
        for (int i = 0; i < side; ++i)
          for (int j = 0; j < side; ++j) tmp[i * side + j] = x(r, (side - 1 - j) * side + i);
        for (Eigen::Index j = 0; j < width; ++j) x(r, j) = tmp[static_cast<std::size_t>(j)];
      }
    }
    if (spec.scale_hi > spec.scale_lo || spec.scale_lo != 1.0)
      for (Eigen::Index j = 0; j < width; ++j) x(r, j) *= gain(rng);
    if (spec.jitter_sigma > 0.0) {
      for (Eigen::Index j = 0; j < width; ++j) {
        const double s = spec.feature_std.empty() ? 1.0 : spec.feature_std[static_cast<std::size_t>(j)];
        x(r, j) += spec.jitter_sigma * s * n01(rng);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Method specs

std::string_view kind_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::kBaseline: return "Baseline";
    case MethodKind::kMCDO: return "MCDO";
    case MethodKind::kSVI: return "SVI";
    case MethodKind::kTTA: return "TTA";
  }
  return "?";
}

std::string MethodSpec::name() const {
  if (kind == MethodKind::kBaseline) return ensemble ? "Ensemble" : "Baseline";
  std::string n(kind_name(kind));
  return ensemble ? n + "-Ensemble" : n;
}

MethodSpec MethodSpec::from_name(std::string_view name) {
  MethodSpec spec;
  std::string_view base = name;
  constexpr std::string_view kSuffix = "-Ensemble";
  if (name == "Ensemble") {
    spec.kind = MethodKind::kBaseline;
    spec.ensemble = true;
    return spec;
  }
  if (base.size() > kSuffix.size() && base.substr(base.size() - kSuffix.size()) == kSuffix) {
    spec.ensemble = true;
    base.remove_suffix(kSuffix.size());
  }
  if (base == "Baseline" && !spec.ensemble) spec.kind = MethodKind::kBaseline;
  else if (base == "MCDO") spec.kind = MethodKind::kMCDO;
  else if (base == "SVI") spec.kind = MethodKind::kSVI;
  else if (base == "TTA") spec.kind = MethodKind::kTTA;
  else throw ConfigError("unknown method '" + std::string(name) + "'");
  return spec;
}

int MethodSpec::draws() const {
  const int per_member = kind == MethodKind::kBaseline ? 1 : n_samples;
  return members() * per_member;
}

void MethodSpec::validate() const {
  if (n_members < 1) throw ConfigError("n_members must be >= 1");
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must be in [0,1)");
  if (!(prior_weight >= 0.0)) throw ConfigError("prior_weight must be >= 0");
  augmentation.validate();
}

// ---------------------------------------------------------------------------
// Prediction

namespace {

void check_inputs(const nn::Network& net, const nn::Matrix& x, const std::vector<SampleInfo>& info) {
  if (x.cols() != net.input_width()) throw ShapeError("prediction: input width does not match network");
  if (static_cast<std::size_t>(x.rows()) != info.size())
    throw ShapeError("prediction: sample info count differs from input rows");
}

// Accumulates draws into sample-major storage.
class DrawBuffer {
 public:
  DrawBuffer(std::size_t samples, std::size_t draws, std::size_t classes)
      : draws_(draws), classes_(classes), values_(samples * draws * classes) {}

  void put(std::size_t draw, const nn::Matrix& probs) {
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      double* dst = values_.data() + (static_cast<std::size_t>(i) * draws_ + draw) * classes_;
      for (std::size_t c = 0; c < classes_; ++c) dst[c] = probs(i, static_cast<Eigen::Index>(c));
    }
  }

  PredictionSet finish(std::string tag, std::vector<SampleInfo> info) {
    return PredictionSet(std::move(tag), std::move(info), draws_, classes_, std::move(values_));
  }

 private:
  std::size_t draws_;
  std::size_t classes_;
  std::vector<double> values_;
};

std::size_t classes_of(const nn::Network& net) { return static_cast<std::size_t>(net.output_width()); }

}  // namespace

PredictionSet predict_baseline(const nn::Network& net, const nn::Matrix& x,
                               std::vector<SampleInfo> info) {
  check_inputs(net, x, info);
  DrawBuffer buf(info.size(), 1, classes_of(net));
  buf.put(0, net.forward(x, nn::Mode::kEval, nullptr));
  return buf.finish("Baseline", std::move(info));
}

PredictionSet predict_ensemble(std::span<const nn::Network> members, const nn::Matrix& x,
                               std::vector<SampleInfo> info) {
  if (members.empty()) throw InvalidArgument("ensemble needs at least one member");
  for (const auto& m : members) {
    check_inputs(m, x, info);
    if (m.output_width() != members.front().output_width())
      throw ShapeError("ensemble members disagree on the number of classes");
  }
  DrawBuffer buf(info.size(), members.size(), classes_of(members.front()));
  for (std::size_t j = 0; j < members.size(); ++j)
    buf.put(j, members[j].forward(x, nn::Mode::kEval, nullptr));
  return buf.finish("Ensemble", std::move(info));
}

PredictionSet predict_mcdo(const nn::Network& net, const nn::Matrix& x,
                           std::vector<SampleInfo> info, int n_samples, Rng& rng) {
  check_inputs(net, x, info);
  if (!net.has_dropout()) throw ConfigError("MCDO needs a network with a dropout layer");
  if (n_samples < 1) throw InvalidArgument("n_samples must be >= 1");
  DrawBuffer buf(info.size(), static_cast<std::size_t>(n_samples), classes_of(net));
  for (int s = 0; s < n_samples; ++s)
    buf.put(static_cast<std::size_t>(s), net.forward(x, nn::Mode::kTrain, &rng));
  return buf.finish("MCDO", std::move(info));
}

PredictionSet predict_svi(const nn::Network& net, const nn::Matrix& x, std::vector<SampleInfo> info,
                          int n_samples, Rng& rng) {
  check_inputs(net, x, info);
  if (!net.has_variational()) throw ConfigError("SVI needs a network with a variational layer");
  if (n_samples < 1) throw InvalidArgument("n_samples must be >= 1");
  DrawBuffer buf(info.size(), static_cast<std::size_t>(n_samples), classes_of(net));
  for (int s = 0; s < n_samples; ++s)
    buf.put(static_cast<std::size_t>(s), net.forward(x, nn::Mode::kTrain, &rng));
  return buf.finish("SVI", std::move(info));
}

PredictionSet predict_tta(const nn::Network& net, const nn::Matrix& x, std::vector<SampleInfo> info,
                          int n_samples, const AugmentationSpec& aug, Rng& rng) {
  check_inputs(net, x, info);
  aug.validate();
  if (n_samples < 1) throw InvalidArgument("n_samples must be >= 1");
  DrawBuffer buf(info.size(), static_cast<std::size_t>(n_samples), classes_of(net));
  buf.put(0, net.forward(x, nn::Mode::kEval, nullptr));
  for (int s = 1; s < n_samples; ++s) {
    nn::Matrix xa = x;
    augment_features(xa, aug, rng);
    buf.put(static_cast<std::size_t>(s), net.forward(xa, nn::Mode::kEval, nullptr));
  }
  return buf.finish("TTA", std::move(info));
}

PredictionSet predict_ensemble_of(MethodKind inner, std::span<const nn::Network> members,
                                  const nn::Matrix& x, std::vector<SampleInfo> info,
                                  int n_samples, const AugmentationSpec& aug, Rng& rng) {
  if (members.empty()) throw InvalidArgument("ensemble needs at least one member");
  std::vector<PredictionSet> parts;
  parts.reserve(members.size());
  for (const auto& m : members) {
    switch (inner) {
      case MethodKind::kBaseline: parts.push_back(predict_baseline(m, x, info)); break;
      case MethodKind::kMCDO: parts.push_back(predict_mcdo(m, x, info, n_samples, rng)); break;
      case MethodKind::kSVI: parts.push_back(predict_svi(m, x, info, n_samples, rng)); break;
      case MethodKind::kTTA: parts.push_back(predict_tta(m, x, info, n_samples, aug, rng)); break;
    }
    if (parts.back().classes() != parts.front().classes())
      throw ShapeError("ensemble members disagree on the number of classes");
  }
  const std::size_t per = parts.front().draws();
  const std::size_t classes = parts.front().classes();
  const std::size_t total = per * parts.size();
  std::vector<double> values(info.size() * total * classes);
  for (std::size_t i = 0; i < info.size(); ++i)
    for (std::size_t m = 0; m < parts.size(); ++m)
      for (std::size_t s = 0; s < per; ++s) {
        const auto r = parts[m].row(i, s);
        std::copy(r.begin(), r.end(), values.begin() + static_cast<std::ptrdiff_t>((i * total + m * per + s) * classes));
      }
  MethodSpec tag;
  tag.kind = inner;
  tag.ensemble = true;
  return PredictionSet(tag.name(), std::move(info), total, classes, std::move(values));
}

PredictionSet predict(const MethodSpec& spec, std::span<const nn::Network> members,
                      const nn::Matrix& x, std::vector<SampleInfo> info, Rng& rng) {
  spec.validate();
  if (static_cast<int>(members.size()) != spec.members())
    throw InvalidArgument(spec.name() + " needs " + std::to_string(spec.members()) + " networks, got " +
                          std::to_string(members.size()));
  PredictionSet out;
  if (spec.ensemble) {
    out = predict_ensemble_of(spec.kind, members, x, std::move(info), spec.n_samples,
                              spec.augmentation, rng);
  } else {
    switch (spec.kind) {
      case MethodKind::kBaseline: out = predict_baseline(members[0], x, std::move(info)); break;
      case MethodKind::kMCDO: out = predict_mcdo(members[0], x, std::move(info), spec.n_samples, rng); break;
      case MethodKind::kSVI: out = predict_svi(members[0], x, std::move(info), spec.n_samples, rng); break;
      case MethodKind::kTTA:
        out = predict_tta(members[0], x, std::move(info), spec.n_samples, spec.augmentation, rng);
        break;
    }
  }
  return PredictionSet(spec.name(), out.samples(), out.draws(), out.classes(),
                       std::vector<double>(out.values().begin(), out.values().end()));
}

}  // namespace suq
