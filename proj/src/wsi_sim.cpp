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

#include "suq/wsi_sim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace suq::sim {
namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<double> normal_vector(int n, double sigma, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = sigma * dist(rng);
  return v;
}

std::vector<double> unit_vector(int n, Rng& rng) {
  std::vector<double> v = normal_vector(n, 1.0, rng);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

void SlideSpec::validate() const {
  if (width < 1 || height < 1) throw InvalidArgument("slide grid must be at least 1x1");
  if (center_id < 0 || center_id >= kNumCenters)
    throw InvalidArgument("center_id must lie in 0..4");
  for (const auto& poly : polygons) {
    if (!geo::is_simple(poly)) throw DomainError("annotation polygon is not simple");
    for (const auto& p : poly) {
      if (p.x < 0 || p.y < 0 || p.x > width || p.y > height)
        throw DomainError("annotation polygon leaves the slide grid");
    }
  }
}

double SlideSpec::tumor_area() const {
  if (polygons.empty()) return 0.0;
  if (polygons.size() == 1) return geo::area(polygons.front());
  return geo::union_area(polygons);
}

CenterProfile CenterProfile::identity(int center_id, int features) {
  CenterProfile p;
  p.center_id = center_id;
  p.gain.assign(features, 1.0);
  p.offset.assign(features, 0.0);
  return p;
}

void CenterProfile::validate(int features) const {
  if (static_cast<int>(gain.size()) != features || static_cast<int>(offset.size()) != features)
    throw ShapeError("center profile width does not match the feature count");
  for (double g : gain)
    if (!(g > 0.0) || !std::isfinite(g)) throw DomainError("center profile gains must be positive");
  for (double o : offset)
    if (!std::isfinite(o)) throw DomainError("center profile offsets must be finite");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw DomainError("center noise_sigma must be non-negative");
}

FeatureModel FeatureModel::make(int features, double separation, std::uint64_t seed) {
  if (features < 1) throw InvalidArgument("feature count must be positive");
  if (!(separation >= 0.0)) throw InvalidArgument("class separation must be non-negative");
  Rng rng(derive_seed(seed, "class-means"));
  const std::vector<double> u = unit_vector(features, rng);
  FeatureModel m;
  m.healthy_mean.resize(features);
  m.tumor_mean.resize(features);
  for (int j = 0; j < features; ++j) {
    m.healthy_mean[j] = -0.5 * separation * u[j];
    m.tumor_mean[j] = 0.5 * separation * u[j];
  }
  // Orthogonalize a second random direction against u for the slide-level signal.
  std::vector<double> d = unit_vector(features, rng);
  if (features > 1) {
    double dot = 0.0;
    for (int j = 0; j < features; ++j) dot += d[j] * u[j];
    double norm = 0.0;
    for (int j = 0; j < features; ++j) {
      d[j] -= dot * u[j];
      norm += d[j] * d[j];
    }
    norm = std::sqrt(norm);
    for (auto& x : d) x /= norm;
  }
  m.msi_direction = d;
  return m;
}

bool is_border(double coverage) { return coverage > 0.0 && coverage < 1.0; }

double compute_coverage(int x, int y, std::span<const geo::Polygon> polygons) {
  return geo::cell_coverage(x, y, polygons);
}

int tile_label(double coverage, double tau) {
  if (!(tau >= 0.0 && tau < 1.0)) throw DomainError("coverage threshold must lie in [0, 1)");
  if (coverage > tau) return 1;
  if (coverage == 0.0) return 0;
  return kExcluded;
}

void label_tiles(std::vector<TileRecord>& tiles, double tau) {
  for (auto& t : tiles) t.label = tile_label(t.coverage, tau);
}

std::vector<TileRecord> generate_slide(const SlideSpec& spec, const CenterProfile& profile,
                                       const FeatureModel& model) {
  spec.validate();
  const int f = model.features();
  profile.validate(f);

  std::vector<geo::Box> boxes;
  for (const auto& poly : spec.polygons) boxes.push_back(geo::bounding_box(poly));

  Rng rng(derive_seed(spec.seed, "tiles"));
  Rng center_rng(derive_seed(spec.seed, "center-noise"));
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::vector<double> slide_offset = normal_vector(f, model.slide_jitter, rng);

  std::vector<TileRecord> tiles;
  tiles.reserve(static_cast<std::size_t>(spec.width) * spec.height);
  std::vector<geo::Polygon> near;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      near.clear();
      for (std::size_t k = 0; k < boxes.size(); ++k) {
        const auto& b = boxes[k];
        if (b.x1 > x && b.x0 < x + 1 && b.y1 > y && b.y0 < y + 1) near.push_back(spec.polygons[k]);
      }
      TileRecord t;
      t.coverage = near.empty() ? 0.0 : compute_coverage(x, y, near);
      t.border = is_border(t.coverage);
      t.label = tile_label(t.coverage, 0.25);
      t.slide_id = spec.slide_id;
      t.center_id = spec.center_id;
      t.x = x;
      t.y = y;
      t.features.resize(f);
      const double c = t.coverage;
      for (int j = 0; j < f; ++j) {
        double v = (1.0 - c) * model.healthy_mean[j] + c * model.tumor_mean[j] + slide_offset[j] +
                   normal(rng);
        if (spec.slide_label == 1 && !model.msi_direction.empty())
          v += model.msi_shift * c * model.msi_direction[j];
        t.features[j] = v;
      }
      for (int j = 0; j < f; ++j) {
        const double eps = normal(center_rng);
        t.features[j] = profile.gain[j] * t.features[j] + profile.offset[j] + profile.noise_sigma * eps;
      }
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

void DataConfig::validate() const {
  if (centers != kNumCenters) throw ConfigError("the simulator models exactly 5 centers");
  if (slides_per_center < 1) throw ConfigError("slides_per_center must be positive");
  if (grid_width < 1 || grid_height < 1) throw ConfigError("grid must be at least 1x1");
  if (features < 1) throw ConfigError("features must be positive");
  if (!(separation >= 0.0)) throw ConfigError("separation must be non-negative");
  if (!(threshold >= 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in [0, 1)");
  if (min_polygons < 0 || max_polygons < min_polygons)
    throw ConfigError("polygon count range is invalid");
  if (!(min_radius > 0.0) || max_radius < min_radius) throw ConfigError("polygon radius range is invalid");
  if (!(shift_strength >= 0.0)) throw ConfigError("shift_strength must be non-negative");
  if (!(msi_fraction >= 0.0 && msi_fraction <= 1.0)) throw ConfigError("msi_fraction must lie in [0, 1]");
}

int scanner_of_center(int center_id) {
  static constexpr int kScanner[kNumCenters] = {0, 0, 1, 0, 2};
  if (center_id < 0 || center_id >= kNumCenters) throw InvalidArgument("center_id must lie in 0..4");
  return kScanner[center_id];
}

std::vector<CenterProfile> make_center_profiles(const DataConfig& config) {
  const int f = config.features;
  const double s = config.shift_strength;
  struct Scanner {
    std::vector<double> gain, offset;
    double noise;
  };
  std::vector<Scanner> scanners;
  for (int k = 0; k < kNumScanners; ++k) {
    Rng rng(derive_seed(config.seed, "scanner-" + std::to_string(k)));
    Scanner sc;
    const double gain_sd = (k == 0 ? 0.05 : 0.25) * s;
    const double offset_sd = (k == 0 ? 0.1 : 0.6) * s;
    for (double g : normal_vector(f, gain_sd, rng)) sc.gain.push_back(std::exp(g));
    sc.offset = normal_vector(f, offset_sd, rng);
    sc.noise = (k == 0 ? 0.1 : 0.3) * s;
    scanners.push_back(std::move(sc));
  }
  std::vector<CenterProfile> out;
  for (int c = 0; c < kNumCenters; ++c) {
    Rng rng(derive_seed(config.seed, "center-" + std::to_string(c)));
    const Scanner& sc = scanners[scanner_of_center(c)];
    CenterProfile p;
    p.center_id = c;
    p.scanner_id = scanner_of_center(c);
    p.gain = sc.gain;
    p.offset = normal_vector(f, 0.1 * s, rng);
    for (int j = 0; j < f; ++j) p.offset[j] += sc.offset[j];
    p.noise_sigma = sc.noise;
    out.push_back(std::move(p));
  }
  return out;
}

SlideSpec random_slide_spec(std::int64_t slide_id, int center_id, const DataConfig& config,
                            std::uint64_t seed) {
  Rng rng(derive_seed(seed, "polygons"));
  SlideSpec spec;
  spec.slide_id = slide_id;
  spec.center_id = center_id;
  spec.width = config.grid_width;
  spec.height = config.grid_height;
  spec.seed = seed;
  std::uniform_int_distribution<int> count_dist(config.min_polygons, config.max_polygons);
  const int count = count_dist(rng);
  const double fit = 0.5 * std::min(config.grid_width, config.grid_height);
  for (int k = 0; k < count; ++k) {
    const double r_hi = std::min(config.max_radius, fit);
    const double r_lo = std::min(config.min_radius, r_hi);
    const double radius = std::uniform_real_distribution<double>(r_lo, r_hi)(rng);
    const double cx = std::uniform_real_distribution<double>(radius, config.grid_width - radius)(rng);
    const double cy = std::uniform_real_distribution<double>(radius, config.grid_height - radius)(rng);
    const int vertices = std::uniform_int_distribution<int>(6, 11)(rng);
    std::vector<double> angles(vertices);
    for (auto& a : angles) a = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    std::sort(angles.begin(), angles.end());
    angles.erase(std::unique(angles.begin(), angles.end()), angles.end());
    geo::Polygon poly;
    for (double a : angles) {
      const double r = radius * std::uniform_real_distribution<double>(0.6, 1.0)(rng);
      poly.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
    }
    if (geo::is_simple(poly) && geo::area(poly) > 0.0) spec.polygons.push_back(std::move(poly));
  }
  return spec;
}

Dataset generate_dataset(const DataConfig& config) {
  config.validate();
  Dataset data;
  data.config = config;
  data.profiles = make_center_profiles(config);
  FeatureModel model = FeatureModel::make(config.features, config.separation, config.seed);
  model.msi_shift = config.msi_shift;
  for (int c = 0; c < kNumCenters; ++c) {
    std::vector<int> slide_labels(config.slides_per_center, 0);
    const int positives =
        static_cast<int>(std::lround(config.msi_fraction * config.slides_per_center));
    std::fill(slide_labels.begin(), slide_labels.begin() + positives, 1);
    Rng label_rng(derive_seed(config.seed, "slide-labels-" + std::to_string(c)));
    std::shuffle(slide_labels.begin(), slide_labels.end(), label_rng);
    for (int k = 0; k < config.slides_per_center; ++k) {
      const std::int64_t slide_id = static_cast<std::int64_t>(c) * config.slides_per_center + k;
      SlideSpec spec = random_slide_spec(slide_id, c, config,
                                         derive_seed(config.seed, static_cast<std::uint64_t>(slide_id)));
      spec.slide_label = slide_labels[k];
      auto tiles = generate_slide(spec, data.profiles[c], model);
      label_tiles(tiles, config.threshold);
      data.tiles.insert(data.tiles.end(), std::make_move_iterator(tiles.begin()),
                        std::make_move_iterator(tiles.end()));
      data.slides.push_back(std::move(spec));
    }
  }
  return data;
}

SplitSpec SplitSpec::weak() {
  SplitSpec s;
  s.kind = SplitKind::kWeak;
  s.id_centers = {0, 2, 4};
  s.ood_centers = {1, 3};
  return s;
}

SplitSpec SplitSpec::strong() {
  SplitSpec s;
  s.kind = SplitKind::kStrong;
  s.id_centers = {0, 1, 3};
  s.ood_centers = {2, 4};
  return s;
}

SplitSpec SplitSpec::leave_one_out(int center) {
  if (center < 0 || center >= kNumCenters) throw InvalidArgument("held-out center must lie in 0..4");
  SplitSpec s;
  s.kind = SplitKind::kLeaveOneOut;
  s.held_out_center = center;
  for (int c = 0; c < kNumCenters; ++c) {
    if (c == center) s.ood_centers.push_back(c);
    else s.id_centers.push_back(c);
  }
  return s;
}

SplitSpec SplitSpec::from_name(const std::string& name, int center) {
  if (name == "weak") return weak();
  if (name == "strong") return strong();
  if (name == "loo") return leave_one_out(center);
  if (name.rfind("loo", 0) == 0 && name.size() == 4 && name[3] >= '0' && name[3] <= '4')
    return leave_one_out(name[3] - '0');
  throw ConfigError("unknown split kind: " + name);
}

std::string SplitSpec::name() const {
  switch (kind) {
    case SplitKind::kWeak: return "weak";
    case SplitKind::kStrong: return "strong";
    case SplitKind::kLeaveOneOut: return "loo" + std::to_string(held_out_center);
  }
  return "unknown";
}

void SplitSpec::validate() const {
  std::vector<int> seen(kNumCenters, 0);
  for (int c : id_centers) {
    if (c < 0 || c >= kNumCenters) throw ConfigError("split references a center outside 0..4");
    ++seen[c];
  }
  for (int c : ood_centers) {
    if (c < 0 || c >= kNumCenters) throw ConfigError("split references a center outside 0..4");
    ++seen[c];
  }
  for (int c = 0; c < kNumCenters; ++c)
    if (seen[c] != 1) throw ConfigError("ID and OOD centers must partition 0..4");
  if (id_centers.empty()) throw ConfigError("split needs at least one ID center");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train fraction must lie in (0, 1)");
}

Split make_split(const Dataset& data, const SplitSpec& spec, std::uint64_t seed) {
  spec.validate();
  Split split;
  split.spec = spec;
  std::vector<bool> is_id(kNumCenters, false);
  for (int c : spec.id_centers) is_id[c] = true;

  std::map<std::int64_t, bool> test_slide;
  for (int c : spec.id_centers) {
    std::vector<std::pair<double, std::int64_t>> order;
    for (const auto& s : data.slides)
      if (s.center_id == c) order.emplace_back(s.tumor_area(), s.slide_id);
    const std::size_t m = order.size();
    if (m < 3)
      throw ConfigError("center " + std::to_string(c) + " needs at least 3 slides for a split");
    std::sort(order.begin(), order.end());
    const std::size_t hi = (m + 1) / 2;
    test_slide[order[hi - 1].second] = true;
    test_slide[order[hi].second] = true;
    split.test_slides.push_back(order[hi - 1].second);
    split.test_slides.push_back(order[hi].second);
  }
  std::sort(split.test_slides.begin(), split.test_slides.end());

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < data.tiles.size(); ++i) {
    const TileRecord& t = data.tiles[i];
    if (t.label == kExcluded) split.excluded.push_back(i);
    else if (!is_id[t.center_id]) split.test_ood.push_back(i);
    else if (test_slide.count(t.slide_id)) split.test_id.push_back(i);
    else pool.push_back(i);
  }
  Rng rng(derive_seed(seed, "split"));
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * pool.size()));
  split.train.assign(pool.begin(), pool.begin() + n_train);
  split.val.assign(pool.begin() + n_train, pool.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

std::string noise_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kThreshold25: return "25%";
    case NoiseKind::kThreshold0: return "0%";
    case NoiseKind::kUniform: return "Uniform";
    case NoiseKind::kBorder: return "Border";
  }
  return "unknown";
}

void NoiseSpec::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0, 1]");
}

std::size_t inject_uniform_noise(std::vector<TileRecord>& tiles,
                                 std::span<const std::size_t> indices, double flip_prob, Rng& rng) {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw DomainError("flip_prob must lie in [0, 1]");
  std::bernoulli_distribution flip(flip_prob);
  std::size_t flipped = 0;
  for (std::size_t i : indices) {
    TileRecord& t = tiles.at(i);
    if (t.label != 0 && t.label != 1) throw DomainError("uniform noise needs binary labels");
    if (flip(rng)) {
      t.label = 1 - t.label;
      ++flipped;
    }
  }
  return flipped;
}

std::size_t inject_border_noise(std::vector<TileRecord>& tiles, std::span<const std::size_t> indices,
                                double flip_prob, Rng& rng) {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw DomainError("flip_prob must lie in [0, 1]");
  std::bernoulli_distribution flip(flip_prob);
  std::size_t flipped = 0;
  for (std::size_t i : indices) {
    TileRecord& t = tiles.at(i);
    if (t.label != 1 || !(t.coverage < 1.0)) continue;
    if (flip(rng)) {
      t.label = 0;
      ++flipped;
    }
  }
  return flipped;
}

nn::LabeledData gather(const std::vector<TileRecord>& tiles, std::span<const std::size_t> indices) {
  nn::LabeledData d;
  if (indices.empty()) return d;
  const auto f = static_cast<Eigen::Index>(tiles.at(indices[0]).features.size());
  d.features.resize(static_cast<Eigen::Index>(indices.size()), f);
  d.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const TileRecord& t = tiles.at(indices[r]);
    if (static_cast<Eigen::Index>(t.features.size()) != f) throw ShapeError("ragged tile features");
    for (Eigen::Index j = 0; j < f; ++j) d.features(static_cast<Eigen::Index>(r), j) = t.features[j];
    d.labels.push_back(t.label);
  }
  return d;
}

void write_tiles_csv(const std::vector<TileRecord>& tiles, std::ostream& out) {
  const std::size_t f = tiles.empty() ? 0 : tiles.front().features.size();
  out << "slide_id,center_id,x,y,coverage,border,label";
  for (std::size_t j = 0; j < f; ++j) out << ",f" << j;
  out << '\n';
  for (const auto& t : tiles) {
    if (t.features.size() != f) throw ShapeError("ragged tile features");
    out << t.slide_id << ',' << t.center_id << ',' << t.x << ',' << t.y << ','
        << format_double(t.coverage) << ',' << (t.border ? 1 : 0) << ',' << t.label;
    for (double v : t.features) out << ',' << format_double(v);
    out << '\n';
  }
}

std::vector<TileRecord> read_tiles_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("tiles CSV is empty");
  const auto header = split_commas(line);
  if (header.size() < 7 || header[0] != "slide_id" || header[6] != "label")
    throw ParseError("tiles CSV line 1: unexpected header");
  const std::size_t f = header.size() - 7;
  std::vector<TileRecord> tiles;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw ParseError("tiles CSV line " + std::to_string(line_no) + ": wrong number of fields");
    try {
      TileRecord t;
      t.slide_id = parse_int(cells[0]);
      t.center_id = static_cast<int>(parse_int(cells[1]));
      t.x = static_cast<int>(parse_int(cells[2]));
      t.y = static_cast<int>(parse_int(cells[3]));
      t.coverage = parse_double(cells[4]);
      t.border = parse_int(cells[5]) != 0;
      t.label = static_cast<int>(parse_int(cells[6]));
      for (std::size_t j = 0; j < f; ++j) t.features.push_back(parse_double(cells[7 + j]));
      tiles.push_back(std::move(t));
    } catch (const ParseError& e) {
      throw ParseError("tiles CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return tiles;
}

std::string split_manifest_json(const Dataset& data, const Split& split) {
  nlohmann::ordered_json j;
  j["split"] = split.spec.name();
  j["id_centers"] = split.spec.id_centers;
  j["ood_centers"] = split.spec.ood_centers;
  j["train_fraction"] = split.spec.train_fraction;
  j["threshold"] = data.config.threshold;
  j["test_slides"] = split.test_slides;
  nlohmann::ordered_json parts;
  parts["train"] = split.train;
  parts["val"] = split.val;
  parts["test_id"] = split.test_id;
  parts["test_ood"] = split.test_ood;
  parts["excluded"] = split.excluded;
  j["partitions"] = parts;
  nlohmann::ordered_json slides = nlohmann::ordered_json::array();
  for (const auto& s : data.slides) {
    nlohmann::ordered_json e;
    e["slide_id"] = s.slide_id;
    e["center_id"] = s.center_id;
    e["scanner_id"] = scanner_of_center(s.center_id);
    e["width"] = s.width;
    e["height"] = s.height;
    e["slide_label"] = s.slide_label;
    e["polygons"] = s.polygons.size();
    e["tumor_area"] = s.tumor_area();
    slides.push_back(e);
  }
  j["slides"] = slides;
  return j.dump(1) + "\n";
}

}  // namespace suq::sim
