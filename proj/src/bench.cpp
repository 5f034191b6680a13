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

#include "suq/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "suq/measures.hpp"
#include "suq/metrics.hpp"
#include "suq/slide_agg.hpp"

namespace suq::bench {
namespace {

using ojson = nlohmann::ordered_json;

constexpr const char* kPartitions[] = {"id", "ood"};

void append_log(const fs::path& dir, const std::string& message) {
  fs::create_directories(dir);
  std::ofstream log(dir / "log.txt", std::ios::app);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  log << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << message << '\n';
}

ojson read_json_file(const fs::path& path) {
  try {
    return ojson::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string dump(const ojson& j) { return j.dump(1) + "\n"; }

// JSON has no NaN; missing values are written as null.
ojson number(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

std::string family_of(MethodKind kind) {
  switch (kind) {
    case MethodKind::kBaseline: return "deterministic";
    case MethodKind::kMCDO: return "dropout";
    case MethodKind::kSVI: return "variational";
    case MethodKind::kTTA: return "augmented";
  }
  return "deterministic";
}

std::vector<SampleInfo> sample_info(const std::vector<sim::TileRecord>& tiles,
                                    std::span<const std::size_t> indices) {
  std::vector<SampleInfo> info;
  info.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto& t = tiles[i];
    info.push_back({static_cast<std::int64_t>(i), t.slide_id, t.center_id, t.label});
  }
  return info;
}

void write_dataset(const fs::path& run_dir, const sim::Dataset& data, const sim::Split& split) {
  std::ostringstream tiles;
  sim::write_tiles_csv(data.tiles, tiles);
  write_text_file(run_dir / "dataset" / "tiles.csv", tiles.str());
  write_text_file(run_dir / "dataset" / "split.json", sim::split_manifest_json(data, split));
}

ojson load_record(const fs::path& dir) {
  const fs::path p = dir / "run.json";
  return fs::exists(p) ? read_json_file(p) : ojson::object();
}

void save_record(const fs::path& dir, ojson record) {
  record.erase("files");
  write_text_file(dir / "run.json", dump(record));
  update_manifest(dir);
}

ojson base_record(const ExperimentConfig& config) {
  ojson r;
  r["config_hash"] = config.hash();
  r["config"] = ojson::parse(config.canonical_json());
  ojson seeds = ojson::array();
  for (int t = 0; t < config.trials; ++t) seeds.push_back(config.trial_seed(t));
  r["trial_seeds"] = seeds;
  return r;
}

// Per (method, trial, partition) evaluation numbers.
struct TrialMetrics {
  std::size_t n = 0;
  std::size_t draws = 0;
  double accuracy = NAN;
  double balanced_accuracy = NAN;
  double ece = NAN;
  double auarc_accuracy = NAN;
  double auarc_balanced = NAN;
  double accuracy_at_reject = NAN;
  double slide_balanced_accuracy = NAN;
  double slide_ece = NAN;
  double slide_auarc = NAN;
  double border_entropy = NAN;
  double interior_entropy = NAN;
  double border_confidence = NAN;
  double interior_confidence = NAN;
  std::size_t border_tiles = 0;
  std::size_t interior_tiles = 0;
};

RejectCurve thin_curve(const RejectCurve& curve, std::size_t points) {
  const std::size_t n = curve.points.size();
  if (points == 0 || n <= points) return curve;
  RejectCurve out;
  out.metric = curve.metric;
  out.auarc = curve.auarc;
  std::size_t last = n;
  for (std::size_t i = 0; i < points; ++i) {
    const auto k = static_cast<std::size_t>(
        std::llround(static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(points - 1)));
    if (k != last) out.points.push_back(curve.points[k]);
    last = k;
  }
  return out;
}

const sim::TileRecord* tile_of(const std::vector<sim::TileRecord>* tiles, const SampleInfo& s) {
  if (!tiles || s.sample_id < 0 || static_cast<std::size_t>(s.sample_id) >= tiles->size()) return nullptr;
  const auto& t = (*tiles)[static_cast<std::size_t>(s.sample_id)];
  return t.slide_id == s.slide_id ? &t : nullptr;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return NAN;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

ojson summary_stats(const std::vector<double>& values) {
  std::vector<double> finite;
  for (double v : values)
    if (std::isfinite(v)) finite.push_back(v);
  ojson j;
  if (finite.empty()) {
    j["n"] = 0;
    return j;
  }
  const MeanStd ms = mean_std(finite);
  const MedianIqr mi = per_slide_median(finite);
  j["n"] = finite.size();
  j["mean"] = ms.mean;
  j["std"] = ms.std;
  j["median"] = mi.median;
  j["q1"] = mi.q1;
  j["q3"] = mi.q3;
  j["iqr"] = mi.iqr;
  return j;
}

std::string key_stem(const PredictionKey& key) {
  const std::string name = prediction_file_name(key);
  return name.substr(0, name.size() - 4);
}

}  // namespace

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> workers;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
    for (std::size_t w = 0; w < n; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

fs::path run_directory(const ExperimentConfig& config) { return fs::path(config.output) / config.hash(); }

std::string prediction_file_name(const PredictionKey& key) {
  const auto& [method, trial, partition] = key;
  return method + "__t" + std::to_string(trial) + "__" + partition + ".csv";
}

PredictionKey parse_prediction_file_name(const std::string& file_name) {
  std::string stem = file_name;
  if (stem.size() > 4 && stem.compare(stem.size() - 4, 4, ".csv") == 0) stem.resize(stem.size() - 4);
  const auto a = stem.find("__t");
  if (a != std::string::npos) {
    const auto b = stem.find("__", a + 3);
    if (b != std::string::npos && b > a + 3) {
      const std::string digits = stem.substr(a + 3, b - a - 3);
      if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
          b + 2 < stem.size())
        return {stem.substr(0, a), static_cast<int>(parse_int(digits)), stem.substr(b + 2)};
    }
  }
  return {stem, 0, "test"};
}

void update_manifest(const fs::path& dir) {
  ojson record = load_record(dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == "run.json" || rel == "log.txt") continue;
    paths.push_back(rel);
  }
  std::sort(paths.begin(), paths.end());
  ojson files = ojson::array();
  for (const auto& rel : paths) files.push_back({{"path", rel}, {"sha256", sha256_hex(read_text_file(dir / rel))}});
  record["files"] = files;
  write_text_file(dir / "run.json", dump(record));
}

std::vector<std::string> verify_manifest(const fs::path& dir) {
  std::vector<std::string> problems;
  const ojson record = read_json_file(dir / "run.json");
  if (!record.contains("files")) return {"run.json has no file list"};
  std::set<std::string> listed;
  for (const auto& f : record["files"]) {
    const std::string rel = f.at("path").get<std::string>();
    listed.insert(rel);
    const fs::path p = dir / rel;
    if (!fs::exists(p)) problems.push_back("missing: " + rel);
    else if (sha256_hex(read_text_file(p)) != f.at("sha256").get<std::string>())
      problems.push_back("hash mismatch: " + rel);
  }
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).generic_string();
    if (rel != "run.json" && rel != "log.txt" && !listed.count(rel)) problems.push_back("unlisted: " + rel);
  }
  return problems;
}

void write_report_files(const fs::path& root, const ReportFiles& files) {
  for (const auto& [rel, content] : files) write_text_file(root / rel, content);
}

std::vector<TrialFailure> run_trials(
    const ExperimentConfig& config, const sim::Dataset& data, const sim::Split& split,
    const std::function<void(const PredictionKey&, const PredictionSet&)>& sink,
    const fs::path& model_dir) {
  config.validate();
  const nn::LabeledData train_set = sim::gather(data.tiles, split.train);
  const nn::LabeledData val_set = sim::gather(data.tiles, split.val);
  if (train_set.labels.empty() || val_set.labels.empty())
    throw InvalidArgument("split leaves an empty training or validation partition");
  const int features = static_cast<int>(train_set.features.cols());

  nn::RowVector mean = train_set.features.colwise().mean();
  nn::RowVector sd =
      ((train_set.features.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 0.0)) sd(j) = 1.0;

  std::vector<MethodSpec> specs;
  std::map<std::string, int> members_needed;
  for (const auto& name : config.methods) {
    MethodSpec spec = config.method_spec(name);
    spec.augmentation.feature_std.assign(sd.data(), sd.data() + sd.size());
    const std::string fam = family_of(spec.kind);
    members_needed[fam] = std::max(members_needed[fam], spec.members());
    specs.push_back(std::move(spec));
  }
  AugmentationSpec train_aug = config.method_spec("TTA").augmentation;
  train_aug.feature_std.assign(sd.data(), sd.data() + sd.size());

  struct Job {
    std::string family;
    int member;
  };
  std::vector<Job> jobs;
  for (const auto& [fam, count] : members_needed)
    for (int m = 0; m < count; ++m) jobs.push_back({fam, m});

  std::map<std::string, std::vector<std::size_t>> partitions = {{"id", split.test_id},
                                                                {"ood", split.test_ood}};
  std::map<std::string, nn::LabeledData> eval_sets;
  std::map<std::string, std::vector<SampleInfo>> eval_info;
  for (const auto& [name, idx] : partitions) {
    if (idx.empty()) continue;
    eval_sets[name] = sim::gather(data.tiles, idx);
    eval_info[name] = sample_info(data.tiles, idx);
  }

  std::vector<TrialFailure> failures;
  std::mutex mutex;
  for (int trial = 0; trial < config.trials; ++trial) {
    const std::uint64_t ts = config.trial_seed(trial);
    std::vector<nn::Network> nets(jobs.size());
    std::vector<std::string> errors(jobs.size());
    parallel_for(jobs.size(), config.jobs, [&](std::size_t j) {
      const Job& job = jobs[j];
      const std::string tag = job.family + "-" + std::to_string(job.member);
      nn::MlpSpec ms;
      ms.input_width = features;
      ms.hidden = config.train.hidden;
      ms.classes = 2;
      ms.input_mean = mean;
      ms.input_std = sd;
      ms.dropout_p = config.method_params.dropout_p;
      ms.prior_weight = config.method_params.prior_weight;
      if (job.family == "dropout") ms.kind = nn::MlpSpec::Kind::kDropout;
      if (job.family == "variational") ms.kind = nn::MlpSpec::Kind::kVariational;
      Rng init(derive_seed(ts, "init-" + tag));
      nn::TrainConfig tc;
      tc.learning_rate = config.train.learning_rate;
      tc.batch_size = config.train.batch_size;
      tc.plateau_patience = config.train.plateau_patience;
      tc.plateau_factor = config.train.plateau_factor;
      tc.max_epochs = config.train.max_epochs;
      tc.class_balanced = config.train.class_balanced;
      tc.seed = derive_seed(ts, "train-" + tag);
      if (job.family == "augmented")
        tc.augment = [&train_aug](nn::Matrix& x, Rng& rng) { augment_features(x, train_aug, rng); };
      try {
        nets[j] = nn::train(nn::Network::make_mlp(ms, init), train_set, val_set, tc).network;
        if (!model_dir.empty()) {
          std::ostringstream blob;
          nn::save_network(nets[j], blob);
          write_text_file(model_dir / (job.family + "__t" + std::to_string(trial) + "__m" +
                                       std::to_string(job.member) + ".net"),
                          blob.str());
        }
      } catch (const NumericError& e) {
        errors[j] = e.what();
      }
    });

    std::map<std::string, std::vector<nn::Network>> family_nets;
    std::set<std::string> failed_families;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (!errors[j].empty()) {
        failed_families.insert(jobs[j].family);
        failures.push_back({trial, jobs[j].family + "/m" + std::to_string(jobs[j].member), errors[j]});
      }
      family_nets[jobs[j].family].push_back(std::move(nets[j]));
    }

    std::vector<std::pair<std::size_t, std::string>> tasks;
    for (std::size_t s = 0; s < specs.size(); ++s) {
      if (failed_families.count(family_of(specs[s].kind))) continue;
      for (const auto& [part, unused] : eval_sets) tasks.emplace_back(s, part);
    }
    parallel_for(tasks.size(), config.jobs, [&](std::size_t i) {
      const MethodSpec& spec = specs[tasks[i].first];
      const std::string& part = tasks[i].second;
      const auto& nets_of = family_nets.at(family_of(spec.kind));
      Rng rng(derive_seed(ts, spec.name() + "/" + part));
      PredictionSet set = predict(spec, std::span<const nn::Network>(nets_of.data(), spec.members()),
                                  eval_sets.at(part).features, eval_info.at(part), rng);
      std::lock_guard lock(mutex);
      sink({spec.name(), trial, part}, set);
    });
  }
  return failures;
}

ReportFiles evaluate_predictions(const ExperimentConfig& config, const std::vector<PredictionKey>& keys,
                                 const std::function<PredictionSet(const PredictionKey&)>& load,
                                 const std::vector<sim::TileRecord>* tiles, int expected_trials) {
  const EvalSection& ev = config.evaluation;
  ReportFiles files;
  std::map<std::pair<std::string, std::string>, std::vector<std::pair<int, TrialMetrics>>> grouped;
  std::set<std::pair<std::string, std::string>> mapped;

  std::map<std::int64_t, std::pair<int, int>> slide_dims;
  if (tiles) {
    for (const auto& t : *tiles) {
      auto& d = slide_dims[t.slide_id];
      d.first = std::max(d.first, t.x + 1);
      d.second = std::max(d.second, t.y + 1);
    }
  }

  std::vector<PredictionKey> sorted = keys;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& key : sorted) {
    const auto& [method, trial, partition] = key;
    const PredictionSet set = load(key);
    const std::string stem = key_stem(key);
    const std::size_t n = set.size();
    if (n == 0) throw InvalidArgument("prediction set " + stem + " is empty");
    const std::vector<int> pred = predicted_labels(set);
    const std::vector<int> truth = true_labels(set);
    for (int y : truth)
      if (y < 0) throw InvalidArgument("prediction set " + stem + " lacks ground-truth labels");

    const auto conf_scores = score_set(set, Measure::kConfidence);
    const auto ent_scores = score_set(set, Measure::kNormedEntropy);
    std::vector<double> conf(n), ent(n), unc(n);
    std::vector<int> correct(n);
    for (std::size_t i = 0; i < n; ++i) {
      conf[i] = conf_scores[i].value;
      ent[i] = ent_scores[i].value;
      unc[i] = 1.0 - conf[i];
      correct[i] = pred[i] == truth[i];
    }

    TrialMetrics tm;
    tm.n = n;
    tm.draws = set.draws();
    tm.accuracy = accuracy(pred, truth);
    tm.balanced_accuracy = balanced_accuracy(pred, truth);
    const EceResult e = suq::ece(conf, correct, ev.ece_bins);
    tm.ece = e.ece;
    const RejectCurve acc_curve = accuracy_reject_curve(unc, pred, truth, CurveMetric::kAccuracy);
    const RejectCurve bal_curve = accuracy_reject_curve(unc, pred, truth, CurveMetric::kBalancedAccuracy);
    tm.auarc_accuracy = acc_curve.auarc;
    tm.auarc_balanced = bal_curve.auarc;
    const auto k = std::min(n - 1, static_cast<std::size_t>(std::floor(ev.reject_fraction * static_cast<double>(n))));
    tm.accuracy_at_reject = acc_curve.points[k].value;

    // Per-slide medians.
    std::map<std::int64_t, std::vector<std::size_t>> by_slide;
    for (std::size_t i = 0; i < n; ++i) by_slide[set.sample(i).slide_id].push_back(i);
    std::vector<double> s_bacc, s_ece, s_auarc;
    for (const auto& [slide_id, idx] : by_slide) {
      std::vector<int> p, t, c;
      std::vector<double> cf, u;
      for (std::size_t i : idx) {
        p.push_back(pred[i]);
        t.push_back(truth[i]);
        c.push_back(correct[i]);
        cf.push_back(conf[i]);
        u.push_back(unc[i]);
      }
      s_bacc.push_back(balanced_accuracy(p, t));
      s_ece.push_back(suq::ece(cf, c, ev.ece_bins).ece);
      s_auarc.push_back(accuracy_reject_curve(u, p, t, CurveMetric::kAccuracy).auarc);
    }
    tm.slide_balanced_accuracy = per_slide_median(s_bacc).median;
    tm.slide_ece = per_slide_median(s_ece).median;
    tm.slide_auarc = per_slide_median(s_auarc).median;

    // Border versus interior tumor tiles.
    std::vector<double> be, ie, bc, ic;
    for (std::size_t i = 0; i < n; ++i) {
      const sim::TileRecord* t = tile_of(tiles, set.sample(i));
      if (!t) continue;
      if (sim::is_border(t->coverage)) {
        be.push_back(ent[i]);
        bc.push_back(conf[i]);
      } else if (t->coverage == 1.0) {
        ie.push_back(ent[i]);
        ic.push_back(conf[i]);
      }
    }
    tm.border_tiles = be.size();
    tm.interior_tiles = ie.size();
    tm.border_entropy = mean_of(be);
    tm.interior_entropy = mean_of(ie);
    tm.border_confidence = mean_of(bc);
    tm.interior_confidence = mean_of(ic);

    {
      std::ostringstream a, b, bins;
      write_curve_csv(thin_curve(acc_curve, ev.curve_points), a);
      write_curve_csv(thin_curve(bal_curve, ev.curve_points), b);
      write_bins_csv(e.bins, bins);
      files["curves/" + stem + "__accuracy.csv"] = a.str();
      files["curves/" + stem + "__balanced_accuracy.csv"] = b.str();
      files["bins/" + stem + ".csv"] = bins.str();
    }
    {
      const Extremes ex = top_bottom_k(unc, ev.top_k);
      std::ostringstream out;
      out << "kind,rank,sample_id,slide_id,center_id,x,y,coverage,border,label,predicted,uncertainty\n";
      auto emit = [&](const char* kind, const std::vector<std::size_t>& idx) {
        for (std::size_t r = 0; r < idx.size(); ++r) {
          const std::size_t i = idx[r];
          const SampleInfo& s = set.sample(i);
          const sim::TileRecord* t = tile_of(tiles, s);
          out << kind << ',' << r + 1 << ',' << s.sample_id << ',' << s.slide_id << ',' << s.center_id << ',';
          if (t) out << t->x << ',' << t->y << ',' << format_double(t->coverage) << ',' << (t->border ? 1 : 0);
          else out << ",,,";
          out << ',' << truth[i] << ',' << pred[i] << ',' << format_double(unc[i]) << '\n';
        }
      };
      emit("most_certain", ex.most_certain);
      emit("most_uncertain", ex.most_uncertain);
      files["extremes/" + stem + ".csv"] = out.str();
    }
    if (ev.confidence_maps && tiles && set.classes() == 2 && mapped.insert({method, partition}).second) {
      std::map<std::int64_t, std::vector<std::size_t>> members;
      for (std::size_t i = 0; i < n; ++i)
        if (tile_of(tiles, set.sample(i))) members[set.sample(i).slide_id].push_back(i);
      for (const auto& [slide_id, idx] : members) {
        std::vector<int> xs, ys;
        std::vector<double> p;
        for (std::size_t i : idx) {
          const sim::TileRecord* t = tile_of(tiles, set.sample(i));
          xs.push_back(t->x);
          ys.push_back(t->y);
          p.push_back(mean_prediction(set, i)[1]);
        }
        const auto [w, h] = slide_dims.at(slide_id);
        const auto map = slide::stitch_confidence_map(slide_id, w, h, xs, ys, p);
        std::ostringstream pgm, mask, csv;
        slide::write_pgm(map, pgm);
        slide::write_mask_pgm(map, mask);
        slide::write_map_csv(map, csv);
        const std::string base = "maps/" + stem + "__slide" + std::to_string(slide_id);
        files[base + ".pgm"] = pgm.str();
        files[base + ".mask.pgm"] = mask.str();
        files[base + ".csv"] = csv.str();
      }
    }
    grouped[{method, partition}].emplace_back(trial, tm);
  }

  // Method order: as configured first, then any others alphabetically.
  std::vector<std::string> order;
  for (const auto& m : config.methods) order.push_back(m);
  for (const auto& [mp, unused] : grouped)
    if (std::find(order.begin(), order.end(), mp.first) == order.end()) order.push_back(mp.first);

  ojson summary;
  summary["expected_trials"] = expected_trials;
  ojson results = ojson::array();
  std::ostringstream trials_csv, auarc_csv, slide_csv;
  trials_csv << "method,partition,trial,n,draws,accuracy,balanced_accuracy,ece,auarc_accuracy,"
                "auarc_balanced_accuracy,accuracy_at_reject,slide_balanced_accuracy,slide_ece,"
                "slide_auarc,border_entropy,interior_entropy,border_confidence,interior_confidence\n";
  auarc_csv << "method,partition,trials,auarc_accuracy_mean,auarc_accuracy_std,"
               "auarc_balanced_accuracy_mean,auarc_balanced_accuracy_std\n";
  slide_csv << "method,partition,trials,balanced_accuracy_median,balanced_accuracy_iqr,ece_median,"
               "ece_iqr,auarc_median,auarc_iqr\n";
  std::vector<std::string> part_order = {"id", "ood"};
  for (const auto& [mp, unused] : grouped)
    if (std::find(part_order.begin(), part_order.end(), mp.second) == part_order.end())
      part_order.push_back(mp.second);
  for (const auto& method : order) {
    for (const std::string& partition : part_order) {
      auto it = grouped.find({method, partition});
      if (it == grouped.end()) continue;
      const auto& rows = it->second;
      std::vector<double> acc, bacc, ece_v, aa, ab, ar, sb, se, sa, be, ie, bc, ic;
      ojson per_trial = ojson::array();
      for (const auto& [trial, m] : rows) {
        acc.push_back(m.accuracy);
        bacc.push_back(m.balanced_accuracy);
        ece_v.push_back(m.ece);
        aa.push_back(m.auarc_accuracy);
        ab.push_back(m.auarc_balanced);
        ar.push_back(m.accuracy_at_reject);
        sb.push_back(m.slide_balanced_accuracy);
        se.push_back(m.slide_ece);
        sa.push_back(m.slide_auarc);
        be.push_back(m.border_entropy);
        ie.push_back(m.interior_entropy);
        bc.push_back(m.border_confidence);
        ic.push_back(m.interior_confidence);
        ojson t;
        t["trial"] = trial;
        t["n"] = m.n;
        t["draws"] = m.draws;
        t["accuracy"] = number(m.accuracy);
        t["balanced_accuracy"] = number(m.balanced_accuracy);
        t["ece"] = number(m.ece);
        t["auarc_accuracy"] = number(m.auarc_accuracy);
        t["auarc_balanced_accuracy"] = number(m.auarc_balanced);
        t["accuracy_at_reject"] = number(m.accuracy_at_reject);
        t["slide_balanced_accuracy"] = number(m.slide_balanced_accuracy);
        t["slide_ece"] = number(m.slide_ece);
        t["slide_auarc"] = number(m.slide_auarc);
        t["border_tiles"] = m.border_tiles;
        t["interior_tiles"] = m.interior_tiles;
        t["border_entropy"] = number(m.border_entropy);
        t["interior_entropy"] = number(m.interior_entropy);
        t["border_confidence"] = number(m.border_confidence);
        t["interior_confidence"] = number(m.interior_confidence);
        per_trial.push_back(t);
        trials_csv << method << ',' << partition << ',' << trial << ',' << m.n << ',' << m.draws << ','
                   << csv_number(m.accuracy) << ',' << csv_number(m.balanced_accuracy) << ','
                   << csv_number(m.ece) << ',' << csv_number(m.auarc_accuracy) << ','
                   << csv_number(m.auarc_balanced) << ',' << csv_number(m.accuracy_at_reject) << ','
                   << csv_number(m.slide_balanced_accuracy) << ',' << csv_number(m.slide_ece) << ','
                   << csv_number(m.slide_auarc) << ',' << csv_number(m.border_entropy) << ','
                   << csv_number(m.interior_entropy) << ',' << csv_number(m.border_confidence) << ','
                   << csv_number(m.interior_confidence) << '\n';
      }
      ojson r;
      r["method"] = method;
      r["partition"] = partition;
      r["trials_completed"] = rows.size();
      r["incomplete"] = static_cast<int>(rows.size()) < expected_trials;
      r["reject_fraction"] = ev.reject_fraction;
      r["accuracy"] = summary_stats(acc);
      r["balanced_accuracy"] = summary_stats(bacc);
      r["ece"] = summary_stats(ece_v);
      r["auarc_accuracy"] = summary_stats(aa);
      r["auarc_balanced_accuracy"] = summary_stats(ab);
      r["accuracy_at_reject"] = summary_stats(ar);
      r["slide_balanced_accuracy"] = summary_stats(sb);
      r["slide_ece"] = summary_stats(se);
      r["slide_auarc"] = summary_stats(sa);
      r["border_entropy"] = summary_stats(be);
      r["interior_entropy"] = summary_stats(ie);
      r["border_confidence"] = summary_stats(bc);
      r["interior_confidence"] = summary_stats(ic);
      r["trials"] = per_trial;
      results.push_back(r);

      const MeanStd a1 = mean_std(aa), a2 = mean_std(ab);
      auarc_csv << method << ',' << partition << ',' << rows.size() << ',' << format_double(a1.mean) << ','
                << format_double(a1.std) << ',' << format_double(a2.mean) << ',' << format_double(a2.std)
                << '\n';
      const MedianIqr m1 = per_slide_median(sb), m2 = per_slide_median(se), m3 = per_slide_median(sa);
      slide_csv << method << ',' << partition << ',' << rows.size() << ',' << format_double(m1.median) << ','
                << format_double(m1.iqr) << ',' << format_double(m2.median) << ',' << format_double(m2.iqr)
                << ',' << format_double(m3.median) << ',' << format_double(m3.iqr) << '\n';
    }
  }
  summary["results"] = results;
  files["summary.json"] = dump(summary);
  files["trials.csv"] = trials_csv.str();
  files["table_auarc.csv"] = auarc_csv.str();
  files["table_slides.csv"] = slide_csv.str();
  return files;
}

namespace {

struct Prepared {
  fs::path dir;
  sim::Dataset data;
  sim::Split split;
};

Prepared prepare(const ExperimentConfig& config) {
  config.validate();
  Prepared p;
  p.dir = run_directory(config);
  p.data = sim::generate_dataset(config.resolved_data());
  p.split = sim::make_split(p.data, config.split_spec(), p.data.config.seed);
  write_dataset(p.dir, p.data, p.split);
  return p;
}

ojson merged_record(const fs::path& dir, const ExperimentConfig& config) {
  ojson r = load_record(dir);
  const ojson base = base_record(config);
  for (const auto& [k, v] : base.items()) r[k] = v;
  return r;
}

ojson failures_json(const std::vector<TrialFailure>& failures) {
  ojson arr = ojson::array();
  for (const auto& f : failures) arr.push_back({{"trial", f.trial}, {"family", f.family}, {"message", f.message}});
  return arr;
}

// Trains, writes prediction files under dir/predictions and returns their keys.
std::vector<PredictionKey> train_and_write(const ExperimentConfig& config, const sim::Dataset& data,
                                           const sim::Split& split, const fs::path& dir, bool save_models,
                                           std::vector<TrialFailure>& failures) {
  std::vector<PredictionKey> keys;
  fs::remove_all(dir / "predictions");
  failures = run_trials(
      config, data, split,
      [&](const PredictionKey& key, const PredictionSet& set) {
        write_text_file(dir / "predictions" / prediction_file_name(key), predictions_csv(set));
        keys.push_back(key);
      },
      save_models ? dir / "models" : fs::path());
  std::sort(keys.begin(), keys.end());
  return keys;
}

ojson missing_json(const ExperimentConfig& config, const std::vector<PredictionKey>& keys) {
  std::set<std::pair<std::string, int>> have;
  for (const auto& [m, t, p] : keys) have.insert({m, t});
  ojson arr = ojson::array();
  for (const auto& m : config.methods)
    for (int t = 0; t < config.trials; ++t)
      if (!have.count({m, t})) arr.push_back({{"method", m}, {"trial", t}});
  return arr;
}

ReportFiles evaluate_files(const ExperimentConfig& config, const std::map<PredictionKey, fs::path>& files,
                           const std::vector<sim::TileRecord>* tiles, int expected_trials) {
  std::vector<PredictionKey> keys;
  for (const auto& [k, unused] : files) keys.push_back(k);
  return evaluate_predictions(
      config, keys,
      [&](const PredictionKey& key) { return read_predictions_csv_file(files.at(key).string(), std::get<0>(key)); },
      tiles, expected_trials);
}

void replace_reports(const fs::path& dir, const ReportFiles& files) {
  fs::remove_all(dir / "reports");
  write_report_files(dir / "reports", files);
}

std::map<PredictionKey, fs::path> collect_csv(const fs::path& dir) {
  std::map<PredictionKey, fs::path> out;
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    const PredictionKey key = parse_prediction_file_name(p.filename().string());
    if (!out.emplace(key, p).second) throw InvalidArgument("two prediction files map to " + prediction_file_name(key));
  }
  return out;
}

}  // namespace

CommandResult cmd_generate(const ExperimentConfig& config) {
  const Prepared p = prepare(config);
  save_record(p.dir, merged_record(p.dir, config));
  append_log(p.dir, "generate");
  ojson j;
  j["dir"] = p.dir.generic_string();
  j["split"] = p.split.spec.name();
  j["id_centers"] = p.split.spec.id_centers;
  j["ood_centers"] = p.split.spec.ood_centers;
  j["tiles"] = p.data.tiles.size();
  j["train"] = p.split.train.size();
  j["val"] = p.split.val.size();
  j["test_id"] = p.split.test_id.size();
  j["test_ood"] = p.split.test_ood.size();
  j["excluded"] = p.split.excluded.size();
  j["test_slides"] = p.split.test_slides;
  return {p.dir, dump(j)};
}

CommandResult cmd_run(const ExperimentConfig& config) {
  const Prepared p = prepare(config);
  append_log(p.dir, "run started");
  std::vector<TrialFailure> failures;
  const auto keys = train_and_write(config, p.data, p.split, p.dir, true, failures);
  ojson record = merged_record(p.dir, config);
  record["failures"] = failures_json(failures);
  record["missing"] = missing_json(config, keys);
  ojson preds = ojson::array();
  for (const auto& k : keys) preds.push_back(prediction_file_name(k));
  record["predictions"] = preds;
  save_record(p.dir, record);
  append_log(p.dir, "run finished: " + std::to_string(keys.size()) + " prediction files, " +
                        std::to_string(failures.size()) + " failed trainings");
  ojson j;
  j["dir"] = p.dir.generic_string();
  j["config_hash"] = config.hash();
  j["prediction_files"] = keys.size();
  j["failures"] = record["failures"];
  j["missing"] = record["missing"];
  return {p.dir, dump(j)};
}

CommandResult cmd_evaluate(const ExperimentConfig& config, const std::vector<fs::path>& inputs_in) {
  config.validate();
  std::vector<fs::path> inputs = inputs_in;
  if (inputs.empty()) inputs.push_back(run_directory(config));
  std::map<PredictionKey, fs::path> files;
  std::optional<fs::path> run_dir;
  for (const auto& in : inputs) {
    if (fs::is_directory(in) && fs::is_directory(in / "predictions")) {
      if (inputs.size() != 1) throw InvalidArgument("a run directory must be the only evaluate input");
      run_dir = in;
      files = collect_csv(in / "predictions");
    } else if (fs::is_directory(in)) {
      for (auto& [k, v] : collect_csv(in))
        if (!files.emplace(k, v).second) throw InvalidArgument("two prediction files map to " + prediction_file_name(k));
    } else if (fs::is_regular_file(in)) {
      const PredictionKey key = parse_prediction_file_name(in.filename().string());
      if (!files.emplace(key, in).second) throw InvalidArgument("two prediction files map to " + prediction_file_name(key));
    } else {
      throw IoError("no run directory or prediction file at " + in.string());
    }
  }
  if (files.empty()) throw InvalidArgument("no prediction files to evaluate");

  std::vector<sim::TileRecord> tiles;
  bool have_tiles = false;
  int expected = 0;
  fs::path out_dir;
  ojson record;
  if (run_dir) {
    out_dir = *run_dir;
    record = load_record(out_dir);
    const fs::path tiles_path = out_dir / "dataset" / "tiles.csv";
    if (fs::exists(tiles_path)) {
      std::ifstream in(tiles_path);
      tiles = sim::read_tiles_csv(in);
      have_tiles = true;
    }
    expected = record.contains("config") ? record["config"].value("trials", config.trials) : config.trials;
  } else {
    std::set<int> trials;
    std::string digest;
    for (const auto& [k, path] : files) {
      trials.insert(std::get<1>(k));
      digest += path.filename().string() + ":" + sha256_hex(read_text_file(path)) + "\n";
    }
    expected = static_cast<int>(trials.size());
    out_dir = fs::path(config.output) / ("eval-" + sha256_hex(digest).substr(0, 16));
    ojson inputs_json = ojson::array();
    for (const auto& [k, path] : files) inputs_json.push_back(path.filename().string());
    record["inputs"] = inputs_json;
  }
  const ReportFiles reports = evaluate_files(config, files, have_tiles ? &tiles : nullptr, expected);
  replace_reports(out_dir, reports);
  save_record(out_dir, record);
  append_log(out_dir, "evaluate: " + std::to_string(files.size()) + " prediction files");
  ojson j = ojson::parse(reports.at("summary.json"));
  j["dir"] = out_dir.generic_string();
  return {out_dir, dump(j)};
}

CommandResult cmd_noise_suite(const ExperimentConfig& config) {
  config.validate();
  const fs::path root = run_directory(config) / "noise";
  sim::DataConfig d25 = config.resolved_data();
  d25.threshold = 0.25;
  sim::DataConfig d0 = d25;
  d0.threshold = 0.0;
  const sim::SplitSpec spec = config.split_spec();
  const sim::Dataset data25 = sim::generate_dataset(d25);
  const sim::Dataset data0 = sim::generate_dataset(d0);
  const sim::Split split25 = sim::make_split(data25, spec, d25.seed);
  const sim::Split split0 = sim::make_split(data0, spec, d0.seed);

  struct Variant {
    sim::NoiseKind kind;
    std::string slug;
    sim::Dataset data;
    const sim::Split* split;
    std::size_t flipped = 0;
  };
  std::vector<Variant> variants;
  variants.push_back({sim::NoiseKind::kThreshold25, "t25", data25, &split25});
  variants.push_back({sim::NoiseKind::kThreshold0, "t0", data0, &split0});
  variants.push_back({sim::NoiseKind::kUniform, "uniform", data0, &split0});
  variants.push_back({sim::NoiseKind::kBorder, "border", data0, &split0});
  {
    Rng rng(derive_seed(config.seed, "noise-uniform"));
    variants[2].flipped = sim::inject_uniform_noise(variants[2].data.tiles, split0.train, config.flip_prob, rng);
  }
  {
    Rng rng(derive_seed(config.seed, "noise-border"));
    variants[3].flipped = sim::inject_border_noise(variants[3].data.tiles, split0.train, config.flip_prob, rng);
  }

  ojson summary;
  summary["flip_prob"] = config.flip_prob;
  ojson vjson = ojson::array();
  std::ostringstream table;
  table << "variant,method,partition,trials,accuracy_median,accuracy_iqr,balanced_accuracy_median,"
           "balanced_accuracy_iqr,ece_median,ece_iqr\n";
  for (auto& v : variants) {
    const fs::path dir = root / v.slug;
    write_dataset(dir, v.data, *v.split);
    std::vector<TrialFailure> failures;
    const auto keys = train_and_write(config, v.data, *v.split, dir, false, failures);
    std::map<PredictionKey, fs::path> files;
    for (const auto& k : keys) files[k] = dir / "predictions" / prediction_file_name(k);
    const ReportFiles reports = evaluate_files(config, files, &v.data.tiles, config.trials);
    replace_reports(dir, reports);
    ojson record;
    record["variant"] = sim::noise_name(v.kind);
    record["flipped"] = v.flipped;
    record["failures"] = failures_json(failures);
    save_record(dir, record);

    const ojson s = ojson::parse(reports.at("summary.json"));
    ojson entry;
    entry["variant"] = sim::noise_name(v.kind);
    entry["dir"] = v.slug;
    entry["flipped"] = v.flipped;
    entry["train_tiles"] = v.split->train.size();
    entry["failures"] = failures_json(failures);
    ojson rows = ojson::array();
    for (const auto& r : s["results"]) {
      ojson row;
      row["method"] = r["method"];
      row["partition"] = r["partition"];
      row["trials_completed"] = r["trials_completed"];
      row["accuracy"] = r["accuracy"];
      row["balanced_accuracy"] = r["balanced_accuracy"];
      row["ece"] = r["ece"];
      ojson per_trial = ojson::array();
      for (const auto& t : r["trials"])
        per_trial.push_back({{"trial", t["trial"]}, {"accuracy", t["accuracy"]},
                             {"balanced_accuracy", t["balanced_accuracy"]}, {"ece", t["ece"]}});
      row["trials"] = per_trial;
      rows.push_back(row);
      auto cell = [](const ojson& stats, const char* field) {
        return stats.contains(field) ? format_double(stats[field].get<double>()) : std::string();
      };
      table << sim::noise_name(v.kind) << ',' << r["method"].get<std::string>() << ','
            << r["partition"].get<std::string>() << ',' << r["trials_completed"].get<std::size_t>() << ','
            << cell(r["accuracy"], "median") << ',' << cell(r["accuracy"], "iqr") << ','
            << cell(r["balanced_accuracy"], "median") << ',' << cell(r["balanced_accuracy"], "iqr") << ','
            << cell(r["ece"], "median") << ',' << cell(r["ece"], "iqr") << '\n';
    }
    entry["results"] = rows;
    vjson.push_back(entry);
  }
  summary["variants"] = vjson;
  fs::remove_all(root / "reports");
  write_text_file(root / "reports" / "summary.json", dump(summary));
  write_text_file(root / "reports" / "table_noise.csv", table.str());
  ojson record = base_record(config);
  record["suite"] = "noise";
  save_record(root, record);
  append_log(root, "noise suite finished");
  ojson j = summary;
  j["dir"] = root.generic_string();
  return {root, dump(j)};
}

CommandResult cmd_rank(const ExperimentConfig& config, const std::vector<fs::path>& run_dirs) {
  config.validate();
  std::map<std::string, fs::path> by_split;
  std::vector<std::string> missing;
  if (run_dirs.empty()) {
    for (int c = 0; c < sim::kNumCenters; ++c) {
      ExperimentConfig cfg = config;
      cfg.split = "loo";
      cfg.split_center = c;
      const fs::path dir = run_directory(cfg);
      if (fs::is_directory(dir / "predictions")) by_split["loo" + std::to_string(c)] = dir;
    }
  } else {
    for (const auto& dir : run_dirs) {
      const ojson record = read_json_file(dir / "run.json");
      if (!record.contains("config")) throw InvalidArgument(dir.string() + " is not a run directory");
      const auto& split = record["config"]["split"];
      const std::string name =
          sim::SplitSpec::from_name(split["kind"].get<std::string>(), split["center"].get<int>()).name();
      if (!by_split.emplace(name, dir).second) throw InvalidArgument("two runs given for split " + name);
    }
  }
  for (int c = 0; c < sim::kNumCenters; ++c)
    if (!by_split.count("loo" + std::to_string(c))) missing.push_back("loo" + std::to_string(c));
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw InvalidArgument("rank needs all five leave-one-out runs; missing: " + list);
  }

  struct MetricDef {
    const char* name;
    const char* field;
    const char* stat;
    Orientation orientation;
  };
  const MetricDef metrics[] = {{"auarc", "auarc_accuracy", "mean", Orientation::kHigherIsBetter},
                               {"balanced_accuracy", "balanced_accuracy", "median", Orientation::kHigherIsBetter},
                               {"ece", "ece", "median", Orientation::kLowerIsBetter}};
  RankTable table;
  table.methods = config.methods;
  std::string hashes;
  for (const auto& [split, dir] : by_split) {
    if (!fs::exists(dir / "reports" / "summary.json")) cmd_evaluate(config, {dir});
    const ojson summary = read_json_file(dir / "reports" / "summary.json");
    hashes += load_record(dir).value("config_hash", dir.filename().string());
    for (const char* partition : kPartitions) {
      for (const auto& m : metrics) {
        std::map<std::string, double> scores;
        for (const auto& r : summary["results"]) {
          if (r["partition"] != partition) continue;
          const auto& stats = r[m.field];
          scores[r["method"].get<std::string>()] = stats.contains(m.stat) ? stats[m.stat].get<double>() : NAN;
        }
        for (const auto& method : table.methods)
          if (!scores.count(method))
            throw InvalidArgument("run " + split + " has no " + partition + " results for " + method);
        table.rows.push_back(rank_methods(split + "/" + partition, m.name, table.methods, scores, m.orientation));
      }
    }
  }
  const fs::path dir = fs::path(config.output) / ("rank-" + sha256_hex(hashes).substr(0, 16));
  std::ostringstream csv;
  csv << "split,partition,metric";
  for (const auto& m : table.methods) csv << ',' << m;
  csv << '\n';
  ojson rows = ojson::array();
  std::map<std::string, std::vector<double>> rank_sum;
  for (const auto& row : table.rows) {
    const auto slash = row.split.find('/');
    csv << row.split.substr(0, slash) << ',' << row.split.substr(slash + 1) << ',' << row.metric;
    ojson r;
    r["split"] = row.split.substr(0, slash);
    r["partition"] = row.split.substr(slash + 1);
    r["metric"] = row.metric;
    ojson ranks;
    for (const auto& [method, rank] : row.ranks) {
      csv << ',' << rank;
      ranks[method] = rank;
      rank_sum[method].push_back(rank);
    }
    csv << '\n';
    r["ranks"] = ranks;
    rows.push_back(r);
  }
  ojson j;
  j["methods"] = table.methods;
  j["rows"] = rows;
  ojson mean_rank;
  for (const auto& m : table.methods) mean_rank[m] = mean_of(rank_sum[m]);
  j["mean_rank"] = mean_rank;
  fs::remove_all(dir / "reports");
  write_text_file(dir / "reports" / "rank.csv", csv.str());
  write_text_file(dir / "reports" / "rank.json", dump(j));
  ojson record;
  record["runs"] = ojson::object();
  for (const auto& [split, run] : by_split) record["runs"][split] = run.filename().string();
  save_record(dir, record);
  append_log(dir, "rank");
  j["dir"] = dir.generic_string();
  return {dir, dump(j)};
}

CommandResult cmd_compare_measures(const ExperimentConfig& config, const fs::path& run_dir_in) {
  config.validate();
  const fs::path run_dir = run_dir_in.empty() ? run_directory(config) : run_dir_in;
  if (!fs::is_directory(run_dir / "predictions")) throw IoError("no predictions under " + run_dir.string());
  const auto files = collect_csv(run_dir / "predictions");
  std::ostringstream rows_csv;
  rows_csv << "method,partition,trial,draws,confidence,normed_entropy,variance,variance_note\n";
  ojson rows = ojson::array();
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> agg;
  bool binary_equal = true;
  for (const auto& [key, path] : files) {
    const auto& [method, trial, partition] = key;
    const PredictionSet set = read_predictions_csv_file(path.string(), method);
    const auto pred = predicted_labels(set);
    const auto truth = true_labels(set);
    auto auarc_for = [&](Measure m) {
      const auto scores = score_set(set, m);
      const auto u = oriented_uncertainty(scores);
      return accuracy_reject_curve(u, pred, truth, CurveMetric::kAccuracy).auarc;
    };
    const double a_conf = auarc_for(Measure::kConfidence);
    const double a_ent = auarc_for(Measure::kNormedEntropy);
    double a_var = NAN;
    std::string note;
    if (set.draws() < 2) {
      note = "skipped: single draw";
    } else {
      const auto scores = score_set(set, Measure::kVariance);
      if (std::all_of(scores.begin(), scores.end(), [](const auto& s) { return s.value == 0.0; }))
        note = "all variances zero; rejection order falls back to sample index";
      a_var = auarc_for(Measure::kVariance);
    }
    if (set.classes() == 2 && std::abs(a_conf - a_ent) > 1e-12) binary_equal = false;
    rows_csv << method << ',' << partition << ',' << trial << ',' << set.draws() << ','
             << format_double(a_conf) << ',' << format_double(a_ent) << ',' << csv_number(a_var) << ','
             << note << '\n';
    ojson r;
    r["method"] = method;
    r["partition"] = partition;
    r["trial"] = trial;
    r["draws"] = set.draws();
    r["confidence"] = a_conf;
    r["normed_entropy"] = a_ent;
    r["variance"] = number(a_var);
    if (!note.empty()) r["note"] = note;
    rows.push_back(r);
    auto& a = agg[{method, partition}];
    a["confidence"].push_back(a_conf);
    a["normed_entropy"].push_back(a_ent);
    if (std::isfinite(a_var)) a["variance"].push_back(a_var);
  }
  std::ostringstream table;
  table << "method,partition,confidence_mean,normed_entropy_mean,variance_mean\n";
  ojson tjson = ojson::array();
  for (const auto& [mp, m] : agg) {
    const double c = mean_of(m.at("confidence"));
    const double e = mean_of(m.at("normed_entropy"));
    const double v = m.count("variance") ? mean_of(m.at("variance")) : NAN;
    table << mp.first << ',' << mp.second << ',' << format_double(c) << ',' << format_double(e) << ','
          << (std::isfinite(v) ? format_double(v) : std::string("skipped")) << '\n';
    tjson.push_back({{"method", mp.first}, {"partition", mp.second}, {"confidence", c},
                     {"normed_entropy", e}, {"variance", number(v)}});
  }
  ojson j;
  j["binary_confidence_equals_entropy"] = binary_equal;
  j["table"] = tjson;
  j["rows"] = rows;
  write_text_file(run_dir / "measures" / "measures.csv", rows_csv.str());
  write_text_file(run_dir / "measures" / "table_measures.csv", table.str());
  write_text_file(run_dir / "measures" / "measures.json", dump(j));
  update_manifest(run_dir);
  append_log(run_dir, "compare-measures");
  j["dir"] = run_dir.generic_string();
  return {run_dir, dump(j)};
}

CommandResult cmd_slide_suite(const ExperimentConfig& config) {
  config.validate();
  const SlideSection& sc = config.slide;
  const fs::path dir = run_directory(config) / "slide";

  sim::DataConfig d = config.resolved_data();
  d.slides_per_center = sc.slides_per_center;
  d.grid_width = sc.grid;
  d.grid_height = sc.grid;
  d.msi_fraction = sc.msi_fraction;
  d.msi_shift = sc.msi_shift;
  d.seed = derive_seed(d.seed, "slide-suite");
  const sim::Dataset data = sim::generate_dataset(d);
  const sim::SplitSpec spec = config.split_spec();

  std::vector<slide::Bag> bags;
  std::map<std::int64_t, std::vector<std::size_t>> slide_tiles;
  for (std::size_t i = 0; i < data.tiles.size(); ++i)
    if (data.tiles[i].label == 1) slide_tiles[data.tiles[i].slide_id].push_back(i);
  std::vector<std::int64_t> skipped;
  for (const auto& s : data.slides) {
    auto it = slide_tiles.find(s.slide_id);
    if (it == slide_tiles.end()) {
      skipped.push_back(s.slide_id);
      continue;
    }
    slide::Bag bag;
    bag.slide_id = s.slide_id;
    bag.center_id = s.center_id;
    bag.label = s.slide_label;
    bag.features = sim::gather(data.tiles, it->second).features;
    bags.push_back(std::move(bag));
  }

  // Stratified 60/20/20 slide split over the ID centers; OOD slides are test only.
  std::set<int> id_centers(spec.id_centers.begin(), spec.id_centers.end());
  std::vector<std::size_t> by_label[2];
  std::vector<std::size_t> ood_idx;
  for (std::size_t b = 0; b < bags.size(); ++b) {
    if (id_centers.count(bags[b].center_id)) by_label[bags[b].label].push_back(b);
    else ood_idx.push_back(b);
  }
  std::vector<std::size_t> train_idx, val_idx, test_idx;
  Rng split_rng(derive_seed(config.seed, "slide-split"));
  for (auto& group : by_label) {
    if (group.size() < 3) throw ConfigError("slide suite needs at least 3 ID slides of each class");
    std::shuffle(group.begin(), group.end(), split_rng);
    const auto n = group.size();
    const std::size_t n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.6 * n)));
    const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.2 * n)));
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_train) train_idx.push_back(group[i]);
      else if (i < n_train + n_val) val_idx.push_back(group[i]);
      else test_idx.push_back(group[i]);
    }
  }
  for (auto* v : {&train_idx, &val_idx, &test_idx}) std::sort(v->begin(), v->end());
  auto select = [&](const std::vector<std::size_t>& idx) {
    std::vector<slide::Bag> out;
    for (std::size_t i : idx) out.push_back(bags[i]);
    return out;
  };
  const auto train_bags = select(train_idx);
  const auto val_bags = select(val_idx);
  const std::map<std::string, std::vector<slide::Bag>> test_bags = {{"id", select(test_idx)},
                                                                   {"ood", select(ood_idx)}};

  // Tile-level baseline: tumor tiles inherit their slide label.
  auto tiles_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> out;
    for (std::size_t b : idx)
      for (std::size_t t : slide_tiles.at(bags[b].slide_id)) out.push_back(t);
    return out;
  };
  auto with_slide_labels = [&](const std::vector<std::size_t>& tile_idx) {
    nn::LabeledData ld = sim::gather(data.tiles, tile_idx);
    for (std::size_t r = 0; r < tile_idx.size(); ++r) {
      const auto sid = data.tiles[tile_idx[r]].slide_id;
      ld.labels[r] = data.slides[static_cast<std::size_t>(sid)].slide_label;
    }
    return ld;
  };
  const nn::LabeledData tile_train = with_slide_labels(tiles_of(train_idx));
  const nn::LabeledData tile_val = with_slide_labels(tiles_of(val_idx));
  nn::RowVector mean = tile_train.features.colwise().mean();
  nn::RowVector sd = ((tile_train.features.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 0.0)) sd(j) = 1.0;
  std::vector<std::pair<std::int64_t, int>> slide_labels;
  for (const auto& s : data.slides) slide_labels.emplace_back(s.slide_id, s.slide_label);

  const std::string tile_method = "TileTopQ";
  const std::vector<std::string> methods = {"MIL", "MIL-Ensemble", "MIL-MCDO", tile_method};
  std::vector<PredictionKey> keys;
  fs::remove_all(dir / "predictions");
  std::vector<TrialFailure> failures;
  const int features = d.features;
  for (int trial = 0; trial < sc.trials; ++trial) {
    const std::uint64_t ts = derive_seed(config.seed, "slide-trial-" + std::to_string(trial));
    std::vector<slide::AttentionMilHead> heads(static_cast<std::size_t>(sc.members));
    std::vector<std::string> errors(heads.size());
    parallel_for(heads.size(), config.jobs, [&](std::size_t m) {
      Rng init(derive_seed(ts, "mil-init-" + std::to_string(m)));
      auto head = slide::AttentionMilHead::make(features, sc.embed, sc.attention, 2, sc.dropout_p, init);
      slide::MilTrainConfig mc;
      mc.learning_rate = sc.learning_rate;
      mc.weight_decay = sc.weight_decay;
      mc.min_epochs = sc.min_epochs;
      mc.max_epochs = sc.max_epochs;
      mc.patience = sc.patience;
      mc.seed = derive_seed(ts, "mil-train-" + std::to_string(m));
      try {
        heads[m] = slide::train_mil(head, train_bags, val_bags, mc).head;
      } catch (const NumericError& e) {
        errors[m] = e.what();
      }
    });
    bool heads_ok = true;
    for (std::size_t m = 0; m < errors.size(); ++m) {
      if (errors[m].empty()) continue;
      heads_ok = false;
      failures.push_back({trial, "mil/m" + std::to_string(m), errors[m]});
    }

    std::optional<nn::Network> tile_net;
    try {
      nn::MlpSpec ms;
      ms.input_width = features;
      ms.hidden = config.train.hidden;
      ms.input_mean = mean;
      ms.input_std = sd;
      Rng init(derive_seed(ts, "tile-init"));
      nn::TrainConfig tc;
      tc.learning_rate = config.train.learning_rate;
      tc.batch_size = config.train.batch_size;
      tc.plateau_patience = config.train.plateau_patience;
      tc.plateau_factor = config.train.plateau_factor;
      tc.max_epochs = config.train.max_epochs;
      tc.seed = derive_seed(ts, "tile-train");
      tile_net = nn::train(nn::Network::make_mlp(ms, init), tile_train, tile_val, tc).network;
    } catch (const NumericError& e) {
      failures.push_back({trial, "tile", e.what()});
    }

    for (const auto& [part, part_bags] : test_bags) {
      if (part_bags.empty()) continue;
      auto emit = [&](const std::string& method, const PredictionSet& set) {
        const PredictionKey key{method, trial, part};
        write_text_file(dir / "predictions" / prediction_file_name(key), predictions_csv(set));
        keys.push_back(key);
      };
      if (heads_ok) {
        emit("MIL", slide::mil_predict_ensemble(std::span(heads.data(), 1), part_bags, "MIL"));
        emit("MIL-Ensemble", slide::mil_predict_ensemble(heads, part_bags, "MIL-Ensemble"));
        Rng rng(derive_seed(ts, "mil-mcdo/" + part));
        emit("MIL-MCDO", slide::mil_predict_mcdo(heads[0], part_bags, sc.mc_samples, rng, "MIL-MCDO"));
      }
      if (tile_net) {
        std::vector<std::size_t> tidx;
        for (const auto& b : part_bags)
          for (std::size_t t : slide_tiles.at(b.slide_id)) tidx.push_back(t);
        const nn::LabeledData ld = sim::gather(data.tiles, tidx);
        std::vector<SampleInfo> info = sample_info(data.tiles, tidx);
        const PredictionSet tiles_set = predict_baseline(*tile_net, ld.features, std::move(info));
        emit(tile_method, slide::aggregate_slides(tiles_set, sc.top_q, slide_labels, tile_method));
      }
    }
  }
  std::sort(keys.begin(), keys.end());

  ExperimentConfig eval_config = config;
  eval_config.methods = methods;
  eval_config.evaluation.confidence_maps = false;
  std::map<PredictionKey, fs::path> files;
  for (const auto& k : keys) files[k] = dir / "predictions" / prediction_file_name(k);
  ReportFiles reports = evaluate_files(eval_config, files, nullptr, sc.trials);

  // Slide-level AUROC of the positive-class probability.
  std::ostringstream auroc_csv;
  auroc_csv << "method,partition,trials,auroc_mean,auroc_std\n";
  std::map<std::pair<std::string, std::string>, std::vector<double>> aurocs;
  for (const auto& [key, path] : files) {
    const PredictionSet set = read_predictions_csv_file(path.string(), std::get<0>(key));
    std::vector<double> p1;
    std::vector<int> labels;
    for (std::size_t i = 0; i < set.size(); ++i) {
      p1.push_back(mean_prediction(set, i)[1]);
      labels.push_back(set.sample(i).label);
    }
    const bool both = std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0;
    aurocs[{std::get<0>(key), std::get<2>(key)}].push_back(both ? auroc_from_labels(p1, labels) : NAN);
  }
  ojson auroc_json = ojson::array();
  for (const auto& method : methods) {
    for (const char* part : kPartitions) {
      auto it = aurocs.find({method, part});
      if (it == aurocs.end()) continue;
      std::vector<double> finite;
      for (double v : it->second)
        if (std::isfinite(v)) finite.push_back(v);
      const MeanStd ms = finite.empty() ? MeanStd{NAN, NAN} : mean_std(finite);
      auroc_csv << method << ',' << part << ',' << finite.size() << ',' << csv_number(ms.mean) << ','
                << csv_number(ms.std) << '\n';
      auroc_json.push_back({{"method", method}, {"partition", part}, {"auroc", summary_stats(it->second)}});
    }
  }
  reports["table_auroc.csv"] = auroc_csv.str();
  ojson summary = ojson::parse(reports.at("summary.json"));
  summary["auroc"] = auroc_json;
  summary["slides"] = {{"train", train_idx.size()}, {"val", val_idx.size()}, {"test_id", test_idx.size()},
                       {"test_ood", ood_idx.size()}, {"skipped_without_tumor", skipped}};
  summary["failures"] = failures_json(failures);
  reports["summary.json"] = dump(summary);
  replace_reports(dir, reports);
  ojson record = base_record(config);
  record["suite"] = "slide";
  save_record(dir, record);
  append_log(dir, "slide suite finished");
  summary["dir"] = dir.generic_string();
  return {dir, dump(summary)};
}

}  // namespace suq::bench
