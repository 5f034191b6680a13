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

// Selective-classification and calibration metrics.
//
// Every ordering here is stable: ties keep the original sample order, so a
// rejection sequence is a pure function of (uncertainty values, index).

#ifndef SUQ_METRICS_HPP_
#define SUQ_METRICS_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "suq/common.hpp"

namespace suq {

double accuracy(std::span<const int> predicted, std::span<const int> truth);

// Unweighted mean of per-class recall over the classes present in truth.
double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth);

// P(score of a random positive > score of a random negative), ties count 1/2.
double auroc(std::span<const double> positives, std::span<const double> negatives);
// Convenience split by binary labels (label 1 = positive).
double auroc_from_labels(std::span<const double> scores, std::span<const int> labels);

struct CalibrationBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double mean_accuracy = 0.0;
};

// M equal-width bins; bin 0 is [0, 1/M], bin m > 0 is (m/M, (m+1)/M].
struct CalibrationBins {
  std::size_t n = 0;
  std::vector<CalibrationBin> bins;
};

struct EceResult {
  double ece = 0.0;
  CalibrationBins bins;
};

inline constexpr std::size_t kDefaultEceBins = 10;

EceResult ece(std::span<const double> confidences, std::span<const int> correct,
              std::size_t num_bins = kDefaultEceBins);
std::size_t calibration_bin_index(double confidence, std::size_t num_bins);

enum class CurveMetric { kAccuracy, kBalancedAccuracy };
std::string_view curve_metric_name(CurveMetric m);

struct CurvePoint {
  double reject_fraction = 0.0;
  double value = 0.0;
};

struct RejectCurve {
  std::vector<CurvePoint> points;
  CurveMetric metric = CurveMetric::kAccuracy;
  double auarc = 0.0;
};

// Indices from most to least uncertain (higher value = more uncertain); ties
// keep index order.
std::vector<std::size_t> rejection_order(std::span<const double> uncertainty);

// One point per rejection count k = 0..n-1: the metric on the samples left
// after dropping the k most uncertain. Balanced accuracy averages only the
// classes that still have a remaining ground-truth sample.
RejectCurve accuracy_reject_curve(std::span<const double> uncertainty,
                                  std::span<const int> predicted, std::span<const int> truth,
                                  CurveMetric metric);

// Left-Riemann mean of the curve values over all rejection counts.
double auarc(const RejectCurve& curve);

// Type-7 (linear interpolation) quantile.
double quantile(std::vector<double> values, double q);

struct MedianIqr {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
};

struct SliceResult {
  std::int64_t slide_id = 0;
  double balanced_accuracy = 0.0;
  double ece = 0.0;
  double auarc = 0.0;
};

MedianIqr per_slide_median(std::span<const double> values);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
};
MeanStd mean_std(std::span<const double> values);

enum class Orientation { kHigherIsBetter, kLowerIsBetter };

struct RankRow {
  std::string split;
  std::string metric;
  std::vector<std::pair<std::string, int>> ranks;  // in configured method order
};

struct RankTable {
  std::vector<std::string> methods;
  std::vector<RankRow> rows;
};

// Rank 1 is best; ties fall back to the position in method_order.
RankRow rank_methods(std::string split, std::string metric, std::span<const std::string> method_order,
                     const std::map<std::string, double>& scores, Orientation orientation);

struct Extremes {
  std::vector<std::size_t> most_certain;    // ascending uncertainty
  std::vector<std::size_t> most_uncertain;  // descending uncertainty
};

Extremes top_bottom_k(std::span<const double> uncertainty, std::size_t k);

// CSV exports.
void write_curve_csv(const RejectCurve& curve, std::ostream& out);
void write_bins_csv(const CalibrationBins& bins, std::ostream& out);

}  // namespace suq

#endif  // SUQ_METRICS_HPP_
