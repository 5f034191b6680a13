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

// Planar polygon helpers for tile coverage. Coordinates are in tile-grid
// units: tile (x, y) is the unit square [x, x+1] x [y, y+1].

#ifndef SUQ_GEOMETRY_HPP_
#define SUQ_GEOMETRY_HPP_

#include <span>
#include <vector>

namespace suq::geo {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

using Polygon = std::vector<Point>;

struct Box {
  double x0, y0, x1, y1;
};

// Shoelace formula; positive for counter-clockwise vertex order.
double signed_area(const Polygon& poly);
double area(const Polygon& poly);

Box bounding_box(const Polygon& poly);

// At least three vertices and no two non-adjacent edges touch.
bool is_simple(const Polygon& poly);

// Sutherland-Hodgman clipping against an axis-aligned rectangle. Exact in
// area for any simple subject polygon; the result may contain zero-width
// slivers along the rectangle boundary.
Polygon clip_to_rect(const Polygon& poly, const Box& rect);

// Area of the union of polygons by vertical slab decomposition. Slab
// boundaries are placed at every vertex and every pairwise edge
// intersection, so the covered length is linear inside each slab and the
// midpoint rule is exact.
double union_area(std::span<const Polygon> polygons);

// Fraction of the unit cell (cx, cy) covered by the union of the polygons.
// Values within 1e-9 of 0 or 1 are snapped to the endpoint.
double cell_coverage(int cx, int cy, std::span<const Polygon> polygons);

}  // namespace suq::geo

#endif  // SUQ_GEOMETRY_HPP_
