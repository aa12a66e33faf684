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

#ifndef GRIDCAST_TRANSFORM_HPP
#define GRIDCAST_TRANSFORM_HPP

#include <array>
#include <cmath>
#include <concepts>
#include <utility>
#include <vector>

#include "gridcast/grid.hpp"

namespace gridcast {

enum class Interp { kNearest, kBilinear };

/// Describes which members of a grid type are scalar planes (with their
/// out-of-view fill value) and which pairs form a 2-D vector field.
template <typename G>
struct GridChannels;

template <>
struct GridChannels<OccupancyStateGrid> {
  using G = OccupancyStateGrid;
  static constexpr std::array<std::pair<Plane G::*, float>, 3> scalars{
      {{&G::unk, 1.0f}, {&G::stat, 0.0f}, {&G::dyn, 0.0f}}};
  static constexpr std::array<std::pair<Plane G::*, Plane G::*>, 0> vectors{};
  static constexpr bool vectors_in_cells = false;
};

template <>
struct GridChannels<VelocityGrid> {
  using G = VelocityGrid;
  static constexpr std::array<std::pair<Plane G::*, float>, 0> scalars{};
  static constexpr std::array<std::pair<Plane G::*, Plane G::*>, 1> vectors{{{&G::vx, &G::vy}}};
  static constexpr bool vectors_in_cells = false;
};

template <>
struct GridChannels<VehicleMaskGrid> {
  using G = VehicleMaskGrid;
  static constexpr std::array<std::pair<Plane G::*, float>, 1> scalars{{{&G::prob, 0.0f}}};
  static constexpr std::array<std::pair<Plane G::*, Plane G::*>, 0> vectors{};
  static constexpr bool vectors_in_cells = false;
};

template <>
struct GridChannels<SceneFlowGrid> {
  using G = SceneFlowGrid;
  static constexpr std::array<std::pair<Plane G::*, float>, 0> scalars{};
  static constexpr std::array<std::pair<Plane G::*, Plane G::*>, 1> vectors{{{&G::fx, &G::fy}}};
  static constexpr bool vectors_in_cells = true;
};

template <>
struct GridChannels<ScalarGrid> {
  using G = ScalarGrid;
  static constexpr std::array<std::pair<Plane G::*, float>, 1> scalars{{{&G::values, 0.0f}}};
  static constexpr std::array<std::pair<Plane G::*, Plane G::*>, 0> vectors{};
  static constexpr bool vectors_in_cells = false;
};

template <typename G>
concept TypedGrid = requires(G g) {
  { g.geometry } -> std::convertible_to<GridGeometry>;
  GridChannels<G>::scalars;
  GridChannels<G>::vectors;
};

namespace detail {

inline float tap(const Plane& p, int r, int c, float fill) {
  return (r >= 0 && r < p.height() && c >= 0 && c < p.width()) ? p(r, c) : fill;
}

/// Samples a plane at a continuous (row, col) index; taps outside the plane
/// read `fill`.
inline float sample(const Plane& p, double row, double col, Interp interp, float fill) {
  if (interp == Interp::kNearest) {
    return tap(p, static_cast<int>(std::floor(row + 0.5)), static_cast<int>(std::floor(col + 0.5)), fill);
  }
  const double r0 = std::floor(row);
  const double c0 = std::floor(col);
  const double ar = row - r0;
  const double ac = col - c0;
  const int ri = static_cast<int>(r0);
  const int ci = static_cast<int>(c0);
  const double v = (1.0 - ar) * ((1.0 - ac) * tap(p, ri, ci, fill) + ac * tap(p, ri, ci + 1, fill)) +
                   ar * ((1.0 - ac) * tap(p, ri + 1, ci, fill) + ac * tap(p, ri + 1, ci + 1, fill));
  return static_cast<float>(v);
}

/// Area-overlap weights of source cells for each output cell along one axis.
inline std::vector<std::vector<std::pair<int, double>>> area_weights(double start, double step, int out_cells,
                                                                     int src_cells) {
  std::vector<std::vector<std::pair<int, double>>> weights(out_cells);
  for (int j = 0; j < out_cells; ++j) {
    const double a = start + j * step;
    const double b = start + (j + 1) * step;
    const int k_lo = std::max(0, static_cast<int>(std::floor(a)));
    const int k_hi = std::min(src_cells - 1, static_cast<int>(std::ceil(b)) - 1);
    double total = 0.0;
    for (int k = k_lo; k <= k_hi; ++k) {
      const double overlap = std::min(b, k + 1.0) - std::max(a, static_cast<double>(k));
      if (overlap > 0.0) {
        weights[j].emplace_back(k, overlap);
        total += overlap;
      }
    }
    for (auto& [k, w] : weights[j]) w /= total;
  }
  return weights;
}

}  // namespace detail

/// Resamples `g`, expressed in the frame `src_pose`, into the frame
/// `dst_pose` at the same size and resolution. Cells that fall outside the
/// source read the out-of-view value (unknown for state grids, zero
/// elsewhere); vector channels are rotated into the destination frame.
template <TypedGrid G>
G transform_grid(const G& g, const Pose2& src_pose, const Pose2& dst_pose, Interp interp = Interp::kBilinear) {
  if (!src_pose.finite() || !dst_pose.finite()) throw GridError("transform_grid: non-finite pose");
  validate(g.geometry);
  using Ch = GridChannels<G>;

  GridGeometry src_geo = g.geometry;
  src_geo.origin_pose = src_pose;
  GridGeometry dst_geo = g.geometry;
  dst_geo.origin_pose = dst_pose;

  G out = g;
  out.geometry = dst_geo;
  const double dtheta = src_pose.heading - dst_pose.heading;
  const double cs = std::cos(dtheta);
  const double sn = std::sin(dtheta);

  for (int r = 0; r < dst_geo.height; ++r) {
    for (int c = 0; c < dst_geo.width; ++c) {
      const auto [sr, sc] = src_geo.world_to_cell(dst_geo.cell_to_world(r, c));
      for (const auto& [member, fill] : Ch::scalars) {
        (out.*member)(r, c) = detail::sample(g.*member, sr, sc, interp, fill);
      }
      for (const auto& [mx, my] : Ch::vectors) {
        const double vx = detail::sample(g.*mx, sr, sc, interp, 0.0f);
        const double vy = detail::sample(g.*my, sr, sc, interp, 0.0f);
        (out.*mx)(r, c) = static_cast<float>(cs * vx - sn * vy);
        (out.*my)(r, c) = static_cast<float>(sn * vx + cs * vy);
      }
    }
  }
  return out;
}

/// Center-crops `g` to a square of `extent_m` meters and resamples it to
/// `out_cells` per side by area averaging. Flow vectors (in cells) are
/// rescaled to the new resolution.
template <TypedGrid G>
G crop_and_resize(const G& g, double extent_m, int out_cells) {
  validate(g.geometry);
  if (out_cells < 1) throw GridError("crop_and_resize: out_cells must be >= 1");
  if (!(extent_m > 0.0)) throw GridError("crop_and_resize: extent must be positive");
  constexpr double kSlack = 1e-9;
  if (extent_m > g.geometry.extent_x() + kSlack || extent_m > g.geometry.extent_y() + kSlack) {
    throw GridError("crop_and_resize: extent exceeds source extent");
  }
  using Ch = GridChannels<G>;
  const GridGeometry& src = g.geometry;
  const double crop_cells = extent_m / src.resolution;
  const double step = crop_cells / out_cells;
  const auto wr = detail::area_weights(0.5 * (src.height - crop_cells), step, out_cells, src.height);
  const auto wc = detail::area_weights(0.5 * (src.width - crop_cells), step, out_cells, src.width);

  GridGeometry dst = src;
  dst.width = out_cells;
  dst.height = out_cells;
  dst.resolution = extent_m / out_cells;

  auto resample = [&](const Plane& p) {
    Plane o(out_cells, out_cells);
    for (int i = 0; i < out_cells; ++i) {
      for (int j = 0; j < out_cells; ++j) {
        double acc = 0.0;
        for (const auto& [r, a] : wr[i]) {
          for (const auto& [c, b] : wc[j]) acc += a * b * p(r, c);
        }
        o(i, j) = static_cast<float>(acc);
      }
    }
    return o;
  };

  G out;
  out.geometry = dst;
  for (const auto& [member, fill] : Ch::scalars) {
    Plane p = resample(g.*member);
    for (auto& v : p.values()) v = std::clamp(v, 0.0f, 1.0f);
    out.*member = std::move(p);
  }
  const double scale = Ch::vectors_in_cells ? src.resolution / dst.resolution : 1.0;
  for (const auto& [mx, my] : Ch::vectors) {
    out.*mx = resample(g.*mx);
    out.*my = resample(g.*my);
    if (scale != 1.0) {
      for (auto& v : (out.*mx).values()) v = static_cast<float>(v * scale);
      for (auto& v : (out.*my).values()) v = static_cast<float>(v * scale);
    }
  }
  return out;
}

}  // namespace gridcast

#endif  // GRIDCAST_TRANSFORM_HPP
