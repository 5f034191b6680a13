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

#include "suq/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace suq::geo {
namespace {

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

int sign(double v) { return (v > 0) - (v < 0); }

bool on_segment(const Point& p, const Point& a, const Point& b) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_touch(const Point& a, const Point& b, const Point& c, const Point& d) {
  const int d1 = sign(cross(c, d, a));
  const int d2 = sign(cross(c, d, b));
  const int d3 = sign(cross(a, b, c));
  const int d4 = sign(cross(a, b, d));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  if (d1 == 0 && on_segment(a, c, d)) return true;
  if (d2 == 0 && on_segment(b, c, d)) return true;
  if (d3 == 0 && on_segment(c, a, b)) return true;
  if (d4 == 0 && on_segment(d, a, b)) return true;
  return false;
}

// Clip against one half-plane given by inside(p) and the crossing point.
template <class Inside, class Cut>
Polygon clip_half(const Polygon& in, Inside inside, Cut cut) {
  Polygon out;
  if (in.empty()) return out;
  Point prev = in.back();
  bool prev_in = inside(prev);
  for (const Point& cur : in) {
    const bool cur_in = inside(cur);
    if (cur_in) {
      if (!prev_in) out.push_back(cut(prev, cur));
      out.push_back(cur);
    } else if (prev_in) {
      out.push_back(cut(prev, cur));
    }
    prev = cur;
    prev_in = cur_in;
  }
  return out;
}

Point cut_x(const Point& a, const Point& b, double x) {
  const double t = (x - a.x) / (b.x - a.x);
  return {x, a.y + t * (b.y - a.y)};
}

Point cut_y(const Point& a, const Point& b, double y) {
  const double t = (y - a.y) / (b.y - a.y);
  return {a.x + t * (b.x - a.x), y};
}

}  // namespace

double signed_area(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

double area(const Polygon& poly) { return std::abs(signed_area(poly)); }

Box bounding_box(const Polygon& poly) {
  Box b{INFINITY, INFINITY, -INFINITY, -INFINITY};
  for (const auto& p : poly) {
    b.x0 = std::min(b.x0, p.x);
    b.y0 = std::min(b.y0, p.y);
    b.x1 = std::max(b.x1, p.x);
    b.y1 = std::max(b.y1, p.y);
  }
  return b;
}

bool is_simple(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (const auto& p : poly)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % n];
    if (a == b) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      const Point& c = poly[j];
      const Point& d = poly[(j + 1) % n];
      if (adjacent) {
        // Adjacent edges share one vertex; they must not fold back onto each other.
        const Point& shared = (j == i + 1) ? b : a;
        const Point& other_a = (j == i + 1) ? a : b;
        const Point& other_c = (j == i + 1) ? d : c;
        if (sign(cross(shared, other_a, other_c)) == 0) {
          const double dot = (other_a.x - shared.x) * (other_c.x - shared.x) +
                             (other_a.y - shared.y) * (other_c.y - shared.y);
          if (dot > 0) return false;
        }
        continue;
      }
      if (segments_touch(a, b, c, d)) return false;
    }
  }
  return true;
}

Polygon clip_to_rect(const Polygon& poly, const Box& r) {
  Polygon p = clip_half(poly, [&](const Point& q) { return q.x >= r.x0; },
                        [&](const Point& a, const Point& b) { return cut_x(a, b, r.x0); });
  p = clip_half(p, [&](const Point& q) { return q.x <= r.x1; },
                [&](const Point& a, const Point& b) { return cut_x(a, b, r.x1); });
  p = clip_half(p, [&](const Point& q) { return q.y >= r.y0; },
                [&](const Point& a, const Point& b) { return cut_y(a, b, r.y0); });
  p = clip_half(p, [&](const Point& q) { return q.y <= r.y1; },
                [&](const Point& a, const Point& b) { return cut_y(a, b, r.y1); });
  return p;
}

double union_area(std::span<const Polygon> polygons) {
  struct Edge {
    Point a, b;
  };
  std::vector<std::vector<Edge>> edges(polygons.size());
  std::vector<double> xs;
  for (std::size_t k = 0; k < polygons.size(); ++k) {
    const Polygon& poly = polygons[k];
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Point& a = poly[i];
      const Point& b = poly[(i + 1) % poly.size()];
      xs.push_back(a.x);
      if (a.x != b.x) edges[k].push_back({a, b});
    }
  }
  // Pairwise crossings between non-vertical edges of every polygon.
  std::vector<Edge> all;
  for (const auto& e : edges) all.insert(all.end(), e.begin(), e.end());
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      const Point& p = all[i].a;
      const Point& q = all[j].a;
      const double rx = all[i].b.x - p.x, ry = all[i].b.y - p.y;
      const double sx = all[j].b.x - q.x, sy = all[j].b.y - q.y;
      const double denom = rx * sy - ry * sx;
      if (denom == 0.0) continue;
      const double t = ((q.x - p.x) * sy - (q.y - p.y) * sx) / denom;
      const double u = ((q.x - p.x) * ry - (q.y - p.y) * rx) / denom;
      if (t > 0.0 && t < 1.0 && u > 0.0 && u < 1.0) xs.push_back(p.x + t * rx);
    }
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  double total = 0.0;
  std::vector<double> ys;
  std::vector<std::pair<double, double>> spans;
  for (std::size_t s = 0; s + 1 < xs.size(); ++s) {
    const double xa = xs[s];
    const double xb = xs[s + 1];
    const double xm = 0.5 * (xa + xb);
    spans.clear();
    for (const auto& poly_edges : edges) {
      ys.clear();
      for (const Edge& e : poly_edges) {
        if ((e.a.x <= xm) != (e.b.x <= xm)) {
          const double t = (xm - e.a.x) / (e.b.x - e.a.x);
          ys.push_back(e.a.y + t * (e.b.y - e.a.y));
        }
      }
      std::sort(ys.begin(), ys.end());
      for (std::size_t i = 0; i + 1 < ys.size(); i += 2) spans.emplace_back(ys[i], ys[i + 1]);
    }
    if (spans.empty()) continue;
    std::sort(spans.begin(), spans.end());
    double covered = 0.0;
    double lo = spans[0].first, hi = spans[0].second;
    for (std::size_t i = 1; i < spans.size(); ++i) {
      if (spans[i].first > hi) {
        covered += hi - lo;
        lo = spans[i].first;
        hi = spans[i].second;
      } else {
        hi = std::max(hi, spans[i].second);
      }
    }
    covered += hi - lo;
    total += covered * (xb - xa);
  }
  return total;
}

double cell_coverage(int cx, int cy, std::span<const Polygon> polygons) {
  const Box cell{static_cast<double>(cx), static_cast<double>(cy), static_cast<double>(cx) + 1.0,
                 static_cast<double>(cy) + 1.0};
  std::vector<Polygon> pieces;
  for (const auto& poly : polygons) {
    const Box b = bounding_box(poly);
    if (b.x1 <= cell.x0 || b.x0 >= cell.x1 || b.y1 <= cell.y0 || b.y0 >= cell.y1) continue;
    Polygon clipped = clip_to_rect(poly, cell);
    if (area(clipped) > 0.0) pieces.push_back(std::move(clipped));
  }
  double a = 0.0;
  if (pieces.size() == 1) a = area(pieces.front());
  else if (pieces.size() > 1) a = union_area(pieces);
  constexpr double kSnap = 1e-9;
  if (a < kSnap) return 0.0;
  if (a > 1.0 - kSnap) return 1.0;
  return a;
}

}  // namespace suq::geo
