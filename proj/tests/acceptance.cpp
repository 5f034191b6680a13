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

// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.hpp"
#include "suq/bench.hpp"
#include "suq/bench_config.hpp"
#include "suq/common.hpp"
#include "suq/measures.hpp"
#include "suq/methods.hpp"
#include "suq/metrics.hpp"
#include "suq/nn.hpp"

using namespace suq;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = "acceptance_out";

struct Verdict {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = read_text_file(e.path());
  return out;
}

const json* find_result(const json& summary, const std::string& method, const std::string& partition) {
  for (const auto& r : summary["results"])
    if (r["method"] == method && r["partition"] == partition) return &r;
  return nullptr;
}

std::vector<double> per_trial(const json& result, const char* field) {
  std::vector<double> out;
  for (const auto& t : result["trials"]) out.push_back(t[field].get<double>());
  return out;
}

Verdict criterion1() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst_grad = 0.0;
  for (int t = 0; t < 20; ++t) {
    nn::MlpSpec spec;
    spec.input_width = 3 + t % 4;
    spec.hidden = {4 + t % 5, 5};
    spec.classes = 2 + t % 3;
    spec.kind = t % 2 ? nn::MlpSpec::Kind::kVariational : nn::MlpSpec::Kind::kDeterministic;
    spec.initial_sigma = 0.05;
    spec.prior_weight = 1e-3;
    auto net = nn::Network::make_mlp(spec, rng);
    // Random biases keep pre-activations off the ReLU kink.
    for (auto& l : net.mutable_layers()) {
      if (auto* d = std::get_if<nn::DenseLayer>(&l))
        for (Eigen::Index i = 0; i < d->bias.size(); ++i) d->bias(i) = 0.3 * z(rng);
      else if (auto* vl = std::get_if<nn::VariationalDenseLayer>(&l))
        for (Eigen::Index i = 0; i < vl->bias_mean.size(); ++i) vl->bias_mean(i) = 0.3 * z(rng);
    }
    nn::Matrix x(8, spec.input_width);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = z(rng);
    std::vector<int> y(8);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i) % spec.classes;
    const double kl = spec.kind == nn::MlpSpec::Kind::kVariational ? 0.1 : 0.0;
    worst_grad = std::max(worst_grad, nn::gradient_check(net, x, y, 1e-5, rng, kl).max_relative_error);
  }
  std::uniform_real_distribution<double> mu(-3.0, 3.0), sigma(0.1, 3.0);
  double worst_kl = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> m = {mu(rng)}, s = {sigma(rng)};
    worst_kl = std::max(worst_kl, std::abs(nn::kl_gaussian_to_standard_normal(m, s) - oracle::kl_quadrature(m[0], s[0])));
  }
  const double secs = seconds_since(t0);
  v.require(worst_grad < 1e-4, "gradient relative error " + fmt(worst_grad));
  v.require(worst_kl < 1e-6, "KL error " + fmt(worst_kl));
  v.require(secs < 10.0, "runtime " + fmt(secs) + " s");
  v.detail += (v.detail.empty() ? "" : " | ") + std::string("max grad rel err ") + fmt(worst_grad) + ", max KL err " +
              fmt(worst_kl) + ", " + fmt(secs) + " s";
  return v;
}

Verdict criterion2() {
  Verdict v;
  Rng rng(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);
  double worst_ece = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(u(rng) * 200);
    const std::size_t m = 1 + static_cast<std::size_t>(u(rng) * 15);
    std::vector<double> c(n);
    std::vector<int> ok(n);
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = t % 5 == 0 ? std::round(u(rng) * m) / m : u(rng);
      ok[i] = coin(rng);
    }
    worst_ece = std::max(worst_ece, std::abs(ece(c, ok, m).ece - oracle::ece_brute(c, ok, m)));
  }
  bool trapezoid_ok = true;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(u(rng) * 300);
    std::vector<double> unc(n);
    std::vector<int> y(n, 0), p(n), ok(n);
    for (std::size_t i = 0; i < n; ++i) {
      unc[i] = u(rng);
      ok[i] = u(rng) < 0.8;
      p[i] = ok[i] ? 0 : 1;
    }
    const double a = accuracy_reject_curve(unc, p, y, CurveMetric::kAccuracy).auarc;
    trapezoid_ok = trapezoid_ok && std::abs(a - oracle::trapezoid(oracle::accuracy_curve(unc, ok))) <= 1.0 / (2.0 * n);
  }
  double worst_auroc = 0.0;
  for (int t = 0; t < 300; ++t) {
    std::vector<double> a(1 + static_cast<std::size_t>(u(rng) * 199)), b(1 + static_cast<std::size_t>(u(rng) * 199));
    for (auto& x : a) x = t % 2 ? std::round(u(rng) * 10) : u(rng);
    for (auto& x : b) x = t % 2 ? std::round(u(rng) * 10) : u(rng);
    worst_auroc = std::max(worst_auroc, std::abs(auroc(a, b) - oracle::auroc_pairs(a, b)));
  }
  v.require(worst_ece <= 1e-12, "ECE error " + fmt(worst_ece));
  v.require(trapezoid_ok, "AUARC outside the trapezoid bound");
  v.require(worst_auroc <= 1e-12, "AUROC error " + fmt(worst_auroc));
  v.detail += (v.detail.empty() ? "" : " | ") + std::string("max ECE err ") + fmt(worst_ece) + ", max AUROC err " +
              fmt(worst_auroc) + ", trapezoid bound held on 200 curves";
  return v;
}

Verdict criterion3() {
  Verdict v;
  Rng rng(303);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int order_mismatch = 0;
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(u(rng) * 40);
    const std::size_t s = 1 + static_cast<std::size_t>(u(rng) * 5);
    std::vector<SampleInfo> info(n);
    std::vector<double> probs;
    for (std::size_t i = 0; i < n; ++i) {
      info[i].sample_id = static_cast<std::int64_t>(i);
      info[i].label = u(rng) < 0.5;
    }
    for (std::size_t i = 0; i < n * s; ++i) {
      const double p = t % 3 == 0 ? std::round(u(rng) * 6) / 6 : u(rng);
      probs.push_back(p);
      probs.push_back(1.0 - p);
    }
    const PredictionSet set("m", info, s, 2, probs);
    const auto c = oriented_uncertainty(score_set(set, Measure::kConfidence));
    const auto e = oriented_uncertainty(score_set(set, Measure::kNormedEntropy));
    order_mismatch += rejection_order(c) != rejection_order(e);
    const auto pred = predicted_labels(set);
    const auto truth = true_labels(set);
    worst = std::max(worst, std::abs(accuracy_reject_curve(c, pred, truth, CurveMetric::kAccuracy).auarc -
                                     accuracy_reject_curve(e, pred, truth, CurveMetric::kAccuracy).auarc));
  }
  v.require(order_mismatch == 0, std::to_string(order_mismatch) + " differing rejection orders");
  v.require(worst <= 1e-12, "AUARC difference " + fmt(worst));
  v.detail += (v.detail.empty() ? "" : " | ") + std::string("10000 sets, ") + std::to_string(order_mismatch) +
              " order mismatches, max AUARC diff " + fmt(worst);
  return v;
}

Verdict criterion4() {
  Verdict v;
  Rng rng(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 10000;
  std::vector<int> y(n, 0), p(n, 0);
  std::vector<double> oracle_u(n), random_u(n);
  std::size_t errors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (u(rng) < 0.2) p[i] = 1, ++errors;
    oracle_u[i] = p[i] != y[i];
    random_u[i] = u(rng);
  }
  const auto oc = accuracy_reject_curve(oracle_u, p, y, CurveMetric::kAccuracy);
  bool monotone = true;
  for (std::size_t k = 1; k < n; ++k) monotone = monotone && oc.points[k].value >= oc.points[k - 1].value;
  const bool reaches = oc.points[errors].value == 1.0 && oc.points[errors - 1].value < 1.0;
  const auto rc = accuracy_reject_curve(random_u, p, y, CurveMetric::kAccuracy);
  double dev = 0.0;
  for (std::size_t k = 0; k <= n * 8 / 10; ++k) dev = std::max(dev, std::abs(rc.points[k].value - rc.points[0].value));
  v.require(monotone, "oracle curve not monotone");
  v.require(reaches, "oracle curve does not reach 1.0 at the error rate");
  v.require(dev <= 0.03, "random curve deviates by " + fmt(dev));
  v.detail += (v.detail.empty() ? "" : " | ") + std::string("oracle reaches 1.0 at reject ") +
              fmt(static_cast<double>(errors) / n) + ", random curve max deviation " + fmt(dev) +
              " over reject fractions [0, 0.8]";
  return v;
}

struct Benchmark {
  json summary;
  double seconds = 0.0;
  bool ok = false;
  std::string error;
};

Benchmark default_benchmark() {
  Benchmark b;
  try {
    auto cfg = bench::ExperimentConfig::from_json("{}");
    cfg.output = (kRoot / "default").generic_string();
    const auto t0 = std::chrono::steady_clock::now();
    const auto run = bench::cmd_run(cfg);
    bench::cmd_evaluate(cfg, {run.dir});
    b.seconds = seconds_since(t0);
    b.summary = json::parse(read_text_file(run.dir / "reports" / "summary.json"));
    b.ok = true;
  } catch (const std::exception& e) {
    b.error = e.what();
  }
  return b;
}

Verdict criterion5(const Benchmark& b, const std::vector<std::string>& methods) {
  Verdict v;
  if (!b.ok) {
    v.require(false, "benchmark failed: " + b.error);
    return v;
  }
  std::string counts;
  for (const auto& m : methods) {
    for (const char* part : {"id", "ood"}) {
      const json* r = find_result(b.summary, m, part);
      if (!r) {
        v.require(false, "no results for " + m + "/" + part);
        continue;
      }
      const auto acc = per_trial(*r, "accuracy");
      const auto at20 = per_trial(*r, "accuracy_at_reject");
      int wins = 0;
      for (std::size_t t = 0; t < acc.size(); ++t) wins += at20[t] > acc[t];
      v.require(acc.size() == 5, m + "/" + part + " has " + std::to_string(acc.size()) + " trials");
      v.require(wins >= 4, m + "/" + part + " only " + std::to_string(wins) + "/5");
      counts += " " + m + "/" + part + "=" + std::to_string(wins);
    }
  }
  v.require(b.seconds < 600.0, "benchmark took " + fmt(b.seconds) + " s");
  v.detail += (v.detail.empty() ? "" : " | ") + std::string("trials improved at 20% reject:") + counts + "; run+evaluate " +
              fmt(b.seconds) + " s";
  return v;
}

Verdict criterion6(const Benchmark& b) {
  Verdict v;
  if (!b.ok) {
    v.require(false, "benchmark failed: " + b.error);
    return v;
  }
  for (const char* part : {"id", "ood"}) {
    const json* e = find_result(b.summary, "Ensemble", part);
    const json* base = find_result(b.summary, "Baseline", part);
    if (!e || !base) {
      v.require(false, std::string("missing results for ") + part);
      continue;
    }
    const auto ea = per_trial(*e, "auarc_accuracy");
    const auto ba = per_trial(*base, "auarc_accuracy");
    int wins = 0;
    for (std::size_t t = 0; t < std::min(ea.size(), ba.size()); ++t) wins += ea[t] >= ba[t];
    v.require(wins >= 4, std::string(part) + " only " + std::to_string(wins) + "/5");
    v.detail += (v.detail.empty() ? "" : ", ") + std::string(part) + " Ensemble>=Baseline in " +
                std::to_string(wins) + "/5";
  }
  return v;
}

Verdict criterion7() {
  Verdict v;
  try {
    auto cfg = bench::ExperimentConfig::from_json(R"({"methods":["Baseline"]})");
    cfg.output = (kRoot / "noise").generic_string();
    const auto r = bench::cmd_noise_suite(cfg);
    const json s = json::parse(read_text_file(r.dir / "reports" / "summary.json"));
    std::map<std::string, const json*> id;
    for (const auto& var : s["variants"])
      for (const auto& row : var["results"])
        if (row["partition"] == "id") id[var["variant"].get<std::string>()] = &row;
    if (!id.count("0%") || !id.count("Border") || !id.count("Uniform")) {
      v.require(false, "noise suite is missing a variant");
      return v;
    }
    auto med = [&](const std::string& var, const char* field) {
      std::vector<double> vals;
      for (const auto& t : (*id.at(var))["trials"]) vals.push_back(t[field].get<double>());
      return median(vals);
    };
    const double clean_bacc = med("0%", "balanced_accuracy"), border_bacc = med("Border", "balanced_accuracy");
    const double clean_ece = med("0%", "ece"), uniform_ece = med("Uniform", "ece");
    v.require(border_bacc < clean_bacc, "Border does not reduce balanced accuracy");
    v.require(uniform_ece > clean_ece, "Uniform does not inflate ECE");
    v.detail += (v.detail.empty() ? "" : " | ") + std::string("median ID balanced accuracy clean ") + fmt(clean_bacc) +
                " vs Border " + fmt(border_bacc) + "; median ID ECE clean " + fmt(clean_ece) + " vs Uniform " +
                fmt(uniform_ece);
  } catch (const std::exception& e) {
    v.require(false, std::string("noise suite failed: ") + e.what());
  }
  return v;
}

Verdict criterion8(const Benchmark& b, const std::vector<std::string>& methods) {
  Verdict v;
  if (!b.ok) {
    v.require(false, "benchmark failed: " + b.error);
    return v;
  }
  double smallest_gap = INFINITY;
  for (const auto& m : methods) {
    for (const char* part : {"id", "ood"}) {
      const json* r = find_result(b.summary, m, part);
      if (!r) continue;
      const double be = median(per_trial(*r, "border_entropy"));
      const double ie = median(per_trial(*r, "interior_entropy"));
      v.require(be > ie, m + "/" + part + " border " + fmt(be) + " <= interior " + fmt(ie));
      smallest_gap = std::min(smallest_gap, be - ie);
    }
  }
  v.detail += (v.detail.empty() ? "" : " | ") + std::string("smallest median border-minus-interior entropy gap ") +
              fmt(smallest_gap);
  return v;
}

Verdict criterion9() {
  Verdict v;
  Rng rng(909);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> c(100000);
  std::vector<int> ok(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] = 0.5 + 0.5 * u(rng);
    ok[i] = u(rng) < c[i];
  }
  const double e = ece(c, ok, 10).ece;
  v.require(e < 0.02, "ECE " + fmt(e));
  v.detail += (v.detail.empty() ? "" : " | ") + std::string("ECE ") + fmt(e);
  return v;
}

Verdict criterion10() {
  Verdict v;
  try {
    const std::string body =
        R"("trials":2,"methods":["Baseline","Ensemble","MCDO","TTA","SVI"],)"
        R"("data":{"slides_per_center":4,"grid_width":10,"grid_height":10},)"
        R"("method_params":{"n_members":2,"n_samples":3},"train":{"max_epochs":3}})";
    auto a = bench::ExperimentConfig::from_json("{" + body);
    a.output = (kRoot / "det_a").generic_string();
    auto b = a;
    b.output = (kRoot / "det_b").generic_string();
    b.jobs = 3;

    const auto ra = bench::cmd_run(a);
    bench::cmd_evaluate(a, {ra.dir});
    const auto first = snapshot(ra.dir / "reports");
    bench::cmd_run(a);
    bench::cmd_evaluate(a, {ra.dir});
    v.require(snapshot(ra.dir / "reports") == first, "rerun in place changed the reports");
    const auto rb = bench::cmd_run(b);
    bench::cmd_evaluate(b, {rb.dir});
    v.require(snapshot(rb.dir / "reports") == first, "fresh directory with 3 jobs changed the reports");
    v.require(snapshot(rb.dir / "predictions") == snapshot(ra.dir / "predictions"), "predictions differ");
    v.require(bench::verify_manifest(ra.dir).empty(), "manifest check failed");

    // Round trip: in-process evaluation of the sets equals evaluating their CSV files.
    std::map<bench::PredictionKey, PredictionSet> sets;
    const auto data = sim::generate_dataset(a.resolved_data());
    const auto split = sim::make_split(data, a.split_spec(), a.resolved_data().seed);
    bench::run_trials(a, data, split, [&](const bench::PredictionKey& k, const PredictionSet& s) { sets.emplace(k, s); });
    const fs::path ext = kRoot / "roundtrip";
    fs::remove_all(ext);
    std::vector<bench::PredictionKey> keys;
    for (const auto& [k, s] : sets) {
      keys.push_back(k);
      write_text_file(ext / bench::prediction_file_name(k), predictions_csv(s));
    }
    const auto in_process =
        bench::evaluate_predictions(a, keys, [&](const bench::PredictionKey& k) { return sets.at(k); }, nullptr, a.trials);
    const auto er = bench::cmd_evaluate(a, {ext});
    const auto on_disk = snapshot(er.dir / "reports");
    bool same = on_disk.size() == in_process.size();
    for (const auto& [name, content] : in_process) same = same && on_disk.count(name) && on_disk.at(name) == content;
    v.require(same, "round trip reports differ");
    v.detail += (v.detail.empty() ? "" : " | ") + std::to_string(first.size()) + " report files identical across 3 runs; " +
                std::to_string(in_process.size()) + " round-trip files identical";
  } catch (const std::exception& e) {
    v.require(false, std::string("error: ") + e.what());
  }
  return v;
}

}  // namespace

int main() {
  fs::remove_all(kRoot);
  std::vector<std::pair<int, std::function<Verdict()>>> order;
  const std::vector<std::string> methods = bench::ExperimentConfig{}.methods;
  Benchmark bench_result;
  bool bench_done = false;
  auto benchmark = [&]() -> const Benchmark& {
    if (!bench_done) {
      bench_result = default_benchmark();
      bench_done = true;
    }
    return bench_result;
  };
  order.emplace_back(1, criterion1);
  order.emplace_back(2, criterion2);
  order.emplace_back(3, criterion3);
  order.emplace_back(4, criterion4);
  order.emplace_back(5, [&] { return criterion5(benchmark(), methods); });
  order.emplace_back(6, [&] { return criterion6(benchmark()); });
  order.emplace_back(7, criterion7);
  order.emplace_back(8, [&] { return criterion8(benchmark(), methods); });
  order.emplace_back(9, criterion9);
  order.emplace_back(10, criterion10);
  int failed = 0;
  for (const auto& [id, fn] : order) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.require(false, std::string("error: ") + e.what());
    }
    failed += !v.pass;
    std::printf("criterion %d: %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(order.size()) - failed, order.size());
  return failed ? 1 : 0;
}
