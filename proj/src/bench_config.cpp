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

#include "suq/bench_config.hpp"

#include <set>

#include "json.hpp"

namespace suq::bench {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  const json* child(const char* key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!used_.count(item.key())) throw ConfigError("unknown config key '" + name_ + "." + item.key() + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> used_;
};

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(root, "config");
  if (const json* d = top.child("data")) {
    Section s(*d, "data");
    s.get("slides_per_center", c.data.slides_per_center);
    s.get("grid_width", c.data.grid_width);
    s.get("grid_height", c.data.grid_height);
    s.get("features", c.data.features);
    s.get("separation", c.data.separation);
    s.get("threshold", c.data.threshold);
    s.get("min_polygons", c.data.min_polygons);
    s.get("max_polygons", c.data.max_polygons);
    s.get("min_radius", c.data.min_radius);
    s.get("max_radius", c.data.max_radius);
    s.get("shift_strength", c.data.shift_strength);
    std::uint64_t seed = 0;
    if (d->contains("seed")) {
      s.get("seed", seed);
      c.data_seed = seed;
    }
    s.finish();
  }
  if (const json* d = top.child("split")) {
    Section s(*d, "split");
    s.get("kind", c.split);
    s.get("center", c.split_center);
    s.get("train_fraction", c.train_fraction);
    s.finish();
  }
  top.get("methods", c.methods);
  if (const json* d = top.child("method_params")) {
    Section s(*d, "method_params");
    auto& m = c.method_params;
    s.get("n_members", m.n_members);
    s.get("n_samples", m.n_samples);
    s.get("dropout_p", m.dropout_p);
    s.get("prior_weight", m.prior_weight);
    s.get("jitter_sigma", m.jitter_sigma);
    s.get("scale_lo", m.scale_lo);
    s.get("scale_hi", m.scale_hi);
    s.finish();
  }
  if (const json* d = top.child("train")) {
    Section s(*d, "train");
    auto& t = c.train;
    s.get("learning_rate", t.learning_rate);
    s.get("batch_size", t.batch_size);
    s.get("plateau_patience", t.plateau_patience);
    s.get("plateau_factor", t.plateau_factor);
    s.get("max_epochs", t.max_epochs);
    s.get("hidden", t.hidden);
    s.get("class_balanced", t.class_balanced);
    s.finish();
  }
  if (const json* d = top.child("noise")) {
    Section s(*d, "noise");
    s.get("flip_prob", c.flip_prob);
    s.finish();
  }
  if (const json* d = top.child("evaluation")) {
    Section s(*d, "evaluation");
    auto& e = c.evaluation;
    s.get("ece_bins", e.ece_bins);
    s.get("top_k", e.top_k);
    s.get("confidence_maps", e.confidence_maps);
    s.get("reject_fraction", e.reject_fraction);
    s.get("curve_points", e.curve_points);
    s.finish();
  }
  if (const json* d = top.child("slide")) {
    Section s(*d, "slide");
    auto& m = c.slide;
    s.get("slides_per_center", m.slides_per_center);
    s.get("grid", m.grid);
    s.get("msi_fraction", m.msi_fraction);
    s.get("msi_shift", m.msi_shift);
    s.get("top_q", m.top_q);
    s.get("embed", m.embed);
    s.get("attention", m.attention);
    s.get("dropout_p", m.dropout_p);
    s.get("learning_rate", m.learning_rate);
    s.get("weight_decay", m.weight_decay);
    s.get("min_epochs", m.min_epochs);
    s.get("max_epochs", m.max_epochs);
    s.get("patience", m.patience);
    s.get("members", m.members);
    s.get("mc_samples", m.mc_samples);
    s.get("trials", m.trials);
    s.finish();
  }
  top.get("trials", c.trials);
  top.get("seed", c.seed);
  top.get("output", c.output);
  top.get("jobs", c.jobs);
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_json(read_text_file(path));
}

void ExperimentConfig::validate() const {
  resolved_data().validate();
  split_spec().validate();
  if (methods.empty()) throw ConfigError("at least one method is required");
  std::set<std::string> seen;
  for (const auto& name : methods) {
    method_spec(name).validate();
    if (!seen.insert(name).second) throw ConfigError("method listed twice: " + name);
  }
  if (!(train.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (train.max_epochs < 1) throw ConfigError("train.max_epochs must be positive");
  if (train.plateau_patience < 1 || !(train.plateau_factor > 0.0 && train.plateau_factor <= 1.0))
    throw ConfigError("train plateau settings are invalid");
  for (int h : train.hidden)
    if (h < 1) throw ConfigError("train.hidden widths must be positive");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("noise.flip_prob must lie in [0, 1]");
  if (evaluation.ece_bins < 1) throw ConfigError("evaluation.ece_bins must be positive");
  if (evaluation.curve_points == 1) throw ConfigError("evaluation.curve_points must be 0 or at least 2");
  if (!(evaluation.reject_fraction >= 0.0 && evaluation.reject_fraction < 1.0))
    throw ConfigError("evaluation.reject_fraction must lie in [0, 1)");
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  const auto& s = slide;
  if (s.slides_per_center < 3 || s.grid < 1 || s.embed < 1 || s.attention < 1 || s.members < 1 ||
      s.mc_samples < 1 || s.trials < 1)
    throw ConfigError("slide section sizes are invalid");
  if (!(s.top_q > 0.0 && s.top_q <= 1.0)) throw ConfigError("slide.top_q must lie in (0, 1]");
  if (!(s.msi_fraction > 0.0 && s.msi_fraction < 1.0)) throw ConfigError("slide.msi_fraction must lie in (0, 1)");
  if (!(s.dropout_p >= 0.0 && s.dropout_p < 1.0)) throw ConfigError("slide.dropout_p must lie in [0, 1)");
  if (!(s.learning_rate > 0.0) || s.min_epochs < 0 || s.max_epochs < std::max(1, s.min_epochs) ||
      s.patience < 1)
    throw ConfigError("slide training settings are invalid");
}

sim::DataConfig ExperimentConfig::resolved_data() const {
  sim::DataConfig d = data;
  d.seed = data_seed ? *data_seed : derive_seed(seed, "data");
  return d;
}

sim::SplitSpec ExperimentConfig::split_spec() const {
  sim::SplitSpec s = sim::SplitSpec::from_name(split, split_center);
  s.train_fraction = train_fraction;
  return s;
}

MethodSpec ExperimentConfig::method_spec(const std::string& name) const {
  MethodSpec spec;
  try {
    spec = MethodSpec::from_name(name);
  } catch (const Error&) {
    throw ConfigError("unknown method: " + name);
  }
  spec.n_members = method_params.n_members;
  spec.n_samples = method_params.n_samples;
  spec.dropout_p = method_params.dropout_p;
  spec.prior_weight = method_params.prior_weight;
  spec.augmentation.jitter_sigma = method_params.jitter_sigma;
  spec.augmentation.scale_lo = method_params.scale_lo;
  spec.augmentation.scale_hi = method_params.scale_hi;
  return spec;
}

std::uint64_t ExperimentConfig::trial_seed(int trial) const {
  return derive_seed(seed, "trial-" + std::to_string(trial));
}

std::string ExperimentConfig::canonical_json() const {
  const sim::DataConfig d = resolved_data();
  ojson j;
  j["data"] = {{"slides_per_center", d.slides_per_center}, {"grid_width", d.grid_width},
               {"grid_height", d.grid_height},             {"features", d.features},
               {"separation", d.separation},               {"threshold", d.threshold},
               {"min_polygons", d.min_polygons},           {"max_polygons", d.max_polygons},
               {"min_radius", d.min_radius},               {"max_radius", d.max_radius},
               {"shift_strength", d.shift_strength},       {"seed", d.seed}};
  j["split"] = {{"kind", split}, {"center", split_center}, {"train_fraction", train_fraction}};
  j["methods"] = methods;
  const auto& m = method_params;
  j["method_params"] = {{"n_members", m.n_members},       {"n_samples", m.n_samples},
                        {"dropout_p", m.dropout_p},       {"prior_weight", m.prior_weight},
                        {"jitter_sigma", m.jitter_sigma}, {"scale_lo", m.scale_lo},
                        {"scale_hi", m.scale_hi}};
  j["train"] = {{"learning_rate", train.learning_rate},     {"batch_size", train.batch_size},
                {"plateau_patience", train.plateau_patience}, {"plateau_factor", train.plateau_factor},
                {"max_epochs", train.max_epochs},           {"hidden", train.hidden},
                {"class_balanced", train.class_balanced}};
  j["noise"] = {{"flip_prob", flip_prob}};
  j["evaluation"] = {{"ece_bins", evaluation.ece_bins},
                     {"top_k", evaluation.top_k},
                     {"confidence_maps", evaluation.confidence_maps},
                     {"reject_fraction", evaluation.reject_fraction},
                     {"curve_points", evaluation.curve_points}};
  const auto& s = slide;
  j["slide"] = {{"slides_per_center", s.slides_per_center}, {"grid", s.grid},
                {"msi_fraction", s.msi_fraction},           {"msi_shift", s.msi_shift},
                {"top_q", s.top_q},                         {"embed", s.embed},
                {"attention", s.attention},                 {"dropout_p", s.dropout_p},
                {"learning_rate", s.learning_rate},         {"weight_decay", s.weight_decay},
                {"min_epochs", s.min_epochs},               {"max_epochs", s.max_epochs},
                {"patience", s.patience},                   {"members", s.members},
                {"mc_samples", s.mc_samples},               {"trials", s.trials}};
  j["trials"] = trials;
  j["seed"] = seed;
  return j.dump();
}

std::string ExperimentConfig::hash() const { return sha256_hex(canonical_json()).substr(0, 16); }

}  // namespace suq::bench
