// Copyright 2026 The gridcast Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GRIDCAST_POLYGON_HPP
#define GRIDCAST_POLYGON_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "gridcast/grid.hpp"

namespace gridcast {

/// Simple polygon, vertices in counter-clockwise order.
using Polygon = std::vector<Vec2>;

/// Oriented rectangle centered at `pose`, `length` along the heading.
inline Polygon make_rectangle(const Pose2& pose, double length, double width) {
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  return {pose.apply({-hl, -hw}), pose.apply({hl, -hw}), pose.apply({hl, hw}), pose.apply({-hl, hw})};
}

/// Even-odd point-in-polygon test.
inline bool point_in_polygon(const Polygon& poly, Vec2 p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

/// Separating-axis overlap test for convex polygons. Touching counts as
/// overlap.
inline bool convex_polygons_overlap(const Polygon& a, const Polygon& b) {
  auto separated_on_axes_of = [](const Polygon& p, const Polygon& q) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Vec2 e = p[(i + 1) % p.size()] - p[i];
      const Vec2 axis{-e.y, e.x};
      double pmin = std::numeric_limits<double>::max(), pmax = -pmin;
      double qmin = pmin, qmax = -pmin;
      for (const Vec2& v : p) {
        pmin = std::min(pmin, dot(axis, v));
        pmax = std::max(pmax, dot(axis, v));
      }
      for (const Vec2& v : q) {
        qmin = std::min(qmin, dot(axis, v));
        qmax = std::max(qmax, dot(axis, v));
      }
      if (pmax < qmin || qmax < pmin) return true;
    }
    return false;
  };
  return !separated_on_axes_of(a, b) && !separated_on_axes_of(b, a);
}

/// Distance along the ray `origin + s * dir` (unit `dir`) at which it first
/// crosses the polygon boundary, or nullopt if it misses.
inline std::optional<double> ray_polygon_entry(Vec2 origin, Vec2 dir, const Polygon& poly) {
  std::optional<double> best;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 e = poly[(i + 1) % n] - a;
    const double denom = cross(dir, e);
    if (std::abs(denom) < 1e-12) continue;
    const Vec2 ao = a - origin;
    const double s = cross(ao, e) / denom;
    const double u = cross(ao, dir) / denom;
    if (s >= 0.0 && u >= 0.0 && u <= 1.0 && (!best || s < *best)) best = s;
  }
  return best;
}

}  // namespace gridcast

#endif  // GRIDCAST_POLYGON_HPP
