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

// Synthetic whole-slide generator: tile grids with polygonal tumor
// annotations, per-center scanner shifts, splits and label-noise injectors.

#ifndef SUQ_WSI_SIM_HPP_
#define SUQ_WSI_SIM_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "suq/common.hpp"
#include "suq/geometry.hpp"
#include "suq/nn.hpp"

namespace suq::sim {

inline constexpr int kExcluded = -1;
inline constexpr int kNumCenters = 5;
inline constexpr int kNumScanners = 3;

struct SlideSpec {
  std::int64_t slide_id = 0;
  int center_id = 0;
  int width = 1;
  int height = 1;
  std::vector<geo::Polygon> polygons;
  int slide_label = 0;
  std::uint64_t seed = 0;

  void validate() const;
  // Area of the union of the annotations, in tiles.
  double tumor_area() const;
};

struct TileRecord {
  std::vector<double> features;
  int label = 0;  // 0 non-tumor, 1 tumor, kExcluded
  double coverage = 0.0;
  bool border = false;
  std::int64_t slide_id = 0;
  int center_id = 0;
  int x = 0;
  int y = 0;
};

struct CenterProfile {
  int center_id = 0;
  int scanner_id = 0;
  std::vector<double> gain;
  std::vector<double> offset;
  double noise_sigma = 0.0;

  static CenterProfile identity(int center_id, int features);
  void validate(int features) const;
};

// Class-conditional feature model shared by all slides of a dataset.
struct FeatureModel {
  std::vector<double> healthy_mean;
  std::vector<double> tumor_mean;
  double slide_jitter = 0.15;
  // Slides with slide_label 1 shift their tumor tiles by msi_shift * coverage
  // along msi_direction.
  std::vector<double> msi_direction;
  double msi_shift = 0.0;

  static FeatureModel make(int features, double separation, std::uint64_t seed);
  int features() const { return static_cast<int>(healthy_mean.size()); }
};

// 0 < coverage < 1, after snapping.
bool is_border(double coverage);
double compute_coverage(int x, int y, std::span<const geo::Polygon> polygons);

// Labels are set for tau = 0.25; call label_tiles to relabel.
std::vector<TileRecord> generate_slide(const SlideSpec& spec, const CenterProfile& profile,
                                       const FeatureModel& model);

// 1 if coverage > tau, 0 if coverage == 0, excluded otherwise.
int tile_label(double coverage, double tau);
void label_tiles(std::vector<TileRecord>& tiles, double tau);

struct DataConfig {
  int centers = kNumCenters;
  int slides_per_center = 6;
  int grid_width = 24;
  int grid_height = 24;
  int features = 8;
  double separation = 3.0;
  double threshold = 0.25;
  int min_polygons = 1;
  int max_polygons = 3;
  double min_radius = 2.0;
  double max_radius = 7.0;
  // Scale of the scanner-specific gain/offset perturbation.
  double shift_strength = 1.0;
  double msi_fraction = 0.0;
  double msi_shift = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Dataset {
  DataConfig config;
  std::vector<CenterProfile> profiles;
  std::vector<SlideSpec> slides;
  std::vector<TileRecord> tiles;  // grouped by slide, row-major within a slide
};

int scanner_of_center(int center_id);
std::vector<CenterProfile> make_center_profiles(const DataConfig& config);
SlideSpec random_slide_spec(std::int64_t slide_id, int center_id, const DataConfig& config,
                            std::uint64_t seed);
Dataset generate_dataset(const DataConfig& config);

enum class SplitKind { kWeak, kStrong, kLeaveOneOut };

struct SplitSpec {
  SplitKind kind = SplitKind::kStrong;
  int held_out_center = -1;
  std::vector<int> id_centers;
  std::vector<int> ood_centers;
  double train_fraction = 0.75;

  static SplitSpec weak();
  static SplitSpec strong();
  static SplitSpec leave_one_out(int center);
  static SplitSpec from_name(const std::string& name, int center = -1);
  std::string name() const;
  void validate() const;
};

struct Split {
  SplitSpec spec;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test_id;
  std::vector<std::size_t> test_ood;
  std::vector<std::size_t> excluded;
  std::vector<std::int64_t> test_slides;
};

Split make_split(const Dataset& data, const SplitSpec& spec, std::uint64_t seed);

enum class NoiseKind { kThreshold25, kThreshold0, kUniform, kBorder };
std::string noise_name(NoiseKind kind);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kThreshold25;
  double flip_prob = 0.25;
  std::uint64_t seed = 0;
  void validate() const;
};

// Both return the number of flipped labels and only touch tiles[indices].
std::size_t inject_uniform_noise(std::vector<TileRecord>& tiles,
                                 std::span<const std::size_t> indices, double flip_prob, Rng& rng);
std::size_t inject_border_noise(std::vector<TileRecord>& tiles, std::span<const std::size_t> indices,
                                double flip_prob, Rng& rng);

nn::LabeledData gather(const std::vector<TileRecord>& tiles, std::span<const std::size_t> indices);

// CSV: slide_id,center_id,x,y,coverage,border,label,f0..f{F-1}
void write_tiles_csv(const std::vector<TileRecord>& tiles, std::ostream& out);
std::vector<TileRecord> read_tiles_csv(std::istream& in);
std::string split_manifest_json(const Dataset& data, const Split& split);

}  // namespace suq::sim

#endif  // SUQ_WSI_SIM_HPP_
