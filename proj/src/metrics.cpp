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

#include "suq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace suq {
namespace {

void check_aligned(std::span<const int> a, std::span<const int> b) {
  if (a.empty()) throw InvalidArgument("metric on an empty set");
  if (a.size() != b.size()) throw ShapeError("predicted and true label counts differ");
}

int class_count(std::span<const int> truth, std::span<const int> predicted) {
  int max_label = 0;
  for (int y : truth) {
    if (y < 0) throw InvalidArgument("true labels must be non-negative");
    max_label = std::max(max_label, y);
  }
  for (int y : predicted) max_label = std::max(max_label, y);
  return max_label + 1;
}

}  // namespace

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  check_aligned(predicted, truth);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth) {
  check_aligned(predicted, truth);
  const int classes = class_count(truth, predicted);
  std::vector<std::size_t> total(static_cast<std::size_t>(classes), 0), hits(total);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++total[static_cast<std::size_t>(truth[i])];
    hits[static_cast<std::size_t>(truth[i])] += predicted[i] == truth[i];
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    if (total[static_cast<std::size_t>(c)] == 0) continue;
    sum += static_cast<double>(hits[static_cast<std::size_t>(c)]) /
           static_cast<double>(total[static_cast<std::size_t>(c)]);
    ++present;
  }
  return sum / present;
}

double auroc(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty())
    throw InvalidArgument("AUROC is undefined without both positives and negatives");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(positives.size() + negatives.size());
  for (double s : positives) items.push_back({s, true});
  for (double s : negatives) items.push_back({s, false});
  for (const auto& it : items)
    if (std::isnan(it.score)) throw InvalidArgument("AUROC: NaN score");
  std::stable_sort(items.begin(), items.end(),
                   [](const Item& a, const Item& b) { return a.score < b.score; });
  // Sum of midranks (1-based) of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (items[k].positive) rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auroc_from_labels(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("AUROC: score and label counts differ");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(scores[i]);
  return auroc(pos, neg);
}

std::size_t calibration_bin_index(double confidence, std::size_t num_bins) {
  const double m = static_cast<double>(num_bins);
  auto lower_edge = [&](std::size_t b) { return static_cast<double>(b) / m; };
  double guess = std::ceil(confidence * m) - 1.0;
  std::size_t idx = guess < 0.0 ? 0 : std::min(num_bins - 1, static_cast<std::size_t>(guess));
  // Settle rounding at the edges against the exact edge values.
  while (idx > 0 && confidence <= lower_edge(idx)) --idx;
  while (idx + 1 < num_bins && confidence > lower_edge(idx + 1)) ++idx;
  return idx;
}

EceResult ece(std::span<const double> confidences, std::span<const int> correct,
              std::size_t num_bins) {
  if (confidences.empty()) throw InvalidArgument("ECE of an empty set");
  if (confidences.size() != correct.size()) throw ShapeError("ECE: confidence and correctness counts differ");
  if (num_bins < 1) throw InvalidArgument("ECE needs at least one bin");
  EceResult res;
  res.bins.n = confidences.size();
  res.bins.bins.resize(num_bins);
  std::vector<double> conf_sum(num_bins, 0.0), acc_sum(num_bins, 0.0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw DomainError("ECE: confidence outside [0,1]");
    const std::size_t b = calibration_bin_index(c, num_bins);
    ++res.bins.bins[b].count;
    conf_sum[b] += c;
    acc_sum[b] += correct[i] ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(confidences.size());
  for (std::size_t b = 0; b < num_bins; ++b) {
    CalibrationBin& bin = res.bins.bins[b];
    bin.lo = static_cast<double>(b) / static_cast<double>(num_bins);
    bin.hi = static_cast<double>(b + 1) / static_cast<double>(num_bins);
    if (bin.count == 0) continue;
    const double cnt = static_cast<double>(bin.count);
    bin.mean_confidence = conf_sum[b] / cnt;
    bin.mean_accuracy = acc_sum[b] / cnt;
    res.ece += cnt / n * std::abs(bin.mean_accuracy - bin.mean_confidence);
  }
  return res;
}

std::string_view curve_metric_name(CurveMetric m) {
  return m == CurveMetric::kAccuracy ? "accuracy" : "balanced_accuracy";
}

std::vector<std::size_t> rejection_order(std::span<const double> uncertainty) {
  for (double u : uncertainty)
    if (std::isnan(u)) throw InvalidArgument("uncertainty scores must not be NaN");
  std::vector<std::size_t> order(uncertainty.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return uncertainty[a] > uncertainty[b]; });
  return order;
}

RejectCurve accuracy_reject_curve(std::span<const double> uncertainty,
                                  std::span<const int> predicted, std::span<const int> truth,
                                  CurveMetric metric) {
  check_aligned(predicted, truth);
  if (uncertainty.size() != truth.size()) throw ShapeError("reject curve: score count differs from labels");
  const int classes = class_count(truth, predicted);
  const auto order = rejection_order(uncertainty);
  const std::size_t n = truth.size();

  std::vector<long long> total(static_cast<std::size_t>(classes), 0), hits(total);
  long long all_hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(truth[i]);
    ++total[c];
    const bool ok = predicted[i] == truth[i];
    hits[c] += ok;
    all_hits += ok;
  }

  RejectCurve curve;
  curve.metric = metric;
  curve.points.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t remaining = n - k;
    double value = 0.0;
    if (metric == CurveMetric::kAccuracy) {
      value = static_cast<double>(all_hits) / static_cast<double>(remaining);
    } else {
      double sum = 0.0;
      int present = 0;
      for (std::size_t c = 0; c < total.size(); ++c) {
        if (total[c] == 0) continue;
        sum += static_cast<double>(hits[c]) / static_cast<double>(total[c]);
        ++present;
      }
      value = sum / present;
    }
    curve.points.push_back({static_cast<double>(k) / static_cast<double>(n), value});
    // Reject the next most uncertain sample.
    const std::size_t r = order[k];
    const auto c = static_cast<std::size_t>(truth[r]);
    const bool ok = predicted[r] == truth[r];
    --total[c];
    hits[c] -= ok;
    all_hits -= ok;
  }
  curve.auarc = auarc(curve);
  return curve;
}

double auarc(const RejectCurve& curve) {
  if (curve.points.empty()) throw InvalidArgument("AUARC of an empty curve");
  double sum = 0.0;
  for (const auto& p : curve.points) sum += p.value;
  return sum / static_cast<double>(curve.points.size());
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

MedianIqr per_slide_median(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("per-slide median of an empty set");
  std::vector<double> v(values.begin(), values.end());
  MedianIqr r;
  r.median = quantile(v, 0.5);
  r.q1 = quantile(v, 0.25);
  r.q3 = quantile(v, 0.75);
  r.iqr = r.q3 - r.q1;
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("mean of an empty set");
  MeanStd r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

RankRow rank_methods(std::string split, std::string metric, std::span<const std::string> method_order,
                     const std::map<std::string, double>& scores, Orientation orientation) {
  if (method_order.empty()) throw InvalidArgument("rank_methods: no methods");
  std::vector<double> values;
  for (const auto& m : method_order) {
    auto it = scores.find(m);
    if (it == scores.end())
      throw InvalidArgument("rank_methods: split '" + split + "' has no " + metric + " score for " + m);
    values.push_back(it->second);
  }
  auto better = [&](double a, double b) {
    if (std::isnan(b)) return !std::isnan(a);
    if (std::isnan(a)) return false;
    return orientation == Orientation::kHigherIsBetter ? a > b : a < b;
  };
  std::vector<std::size_t> order(method_order.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return better(values[a], values[b]); });
  RankRow row{std::move(split), std::move(metric), {}};
  std::vector<int> rank(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r + 1);
  for (std::size_t i = 0; i < method_order.size(); ++i) row.ranks.emplace_back(method_order[i], rank[i]);
  return row;
}

Extremes top_bottom_k(std::span<const double> uncertainty, std::size_t k) {
  if (k > uncertainty.size()) throw InvalidArgument("top_bottom_k: k exceeds the number of samples");
  Extremes e;
  const auto desc = rejection_order(uncertainty);
  e.most_uncertain.assign(desc.begin(), desc.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::size_t> asc(uncertainty.size());
  std::iota(asc.begin(), asc.end(), 0);
  std::stable_sort(asc.begin(), asc.end(),
                   [&](std::size_t a, std::size_t b) { return uncertainty[a] < uncertainty[b]; });
  e.most_certain.assign(asc.begin(), asc.begin() + static_cast<std::ptrdiff_t>(k));
  return e;
}

void write_curve_csv(const RejectCurve& curve, std::ostream& out) {
  out << "reject_fraction,metric_value\n";
  for (const auto& p : curve.points) out << format_double(p.reject_fraction) << ',' << format_double(p.value) << '\n';
}

void write_bins_csv(const CalibrationBins& bins, std::ostream& out) {
  out << "bin_lo,bin_hi,count,mean_conf,mean_acc\n";
  for (const auto& b : bins.bins)
    out << format_double(b.lo) << ',' << format_double(b.hi) << ',' << b.count << ','
        << format_double(b.mean_confidence) << ',' << format_double(b.mean_accuracy) << '\n';
}

}  // namespace suq
