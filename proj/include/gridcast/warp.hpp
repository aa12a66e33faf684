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

#ifndef GRIDCAST_WARP_HPP
#define GRIDCAST_WARP_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "gridcast/grid.hpp"
#include "gridcast/transform.hpp"

/// \file
/// Backward-flow warping. For every target cell c the warped grid reads the
/// previous grid at c + flow(c) (a gather). Flow is in cells, grid frame:
/// +fx moves toward higher columns, +fy toward lower rows. Samples outside
/// the grid read 0.

namespace gridcast {

/// Shape of one h x w plane, used by the span-based kernels.
struct PlaneShape {
  int height = 0;
  int width = 0;
  [[nodiscard]] std::size_t cells() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
};

namespace warp_kernel {

template <typename S>
struct Taps {
  int r0, c0;
  S ar, ac;
};

template <typename S>
inline Taps<S> locate(int r, int c, S fx, S fy) {
  const S row = static_cast<S>(r) - fy;
  const S col = static_cast<S>(c) + fx;
  const S rf = std::floor(row);
  const S cf = std::floor(col);
  return {static_cast<int>(rf), static_cast<int>(cf), row - rf, col - cf};
}

template <typename S>
inline S at(std::span<const S> p, PlaneShape sh, int r, int c) {
  return (r >= 0 && r < sh.height && c >= 0 && c < sh.width)
             ? p[static_cast<std::size_t>(r) * sh.width + static_cast<std::size_t>(c)]
             : S(0);
}

/// out = warp(prev, flow). All spans hold one h x w plane.
template <typename S>
void forward(std::span<const S> prev, std::span<const S> fx, std::span<const S> fy, std::span<S> out, PlaneShape sh,
             Interp interp) {
  for (int r = 0; r < sh.height; ++r) {
    for (int c = 0; c < sh.width; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * sh.width + c;
      if (interp == Interp::kNearest) {
        const int rr = static_cast<int>(std::floor(static_cast<S>(r) - fy[i] + S(0.5)));
        const int cc = static_cast<int>(std::floor(static_cast<S>(c) + fx[i] + S(0.5)));
        out[i] = at(prev, sh, rr, cc);
        continue;
      }
      const Taps<S> t = locate(r, c, fx[i], fy[i]);
      const S v00 = at(prev, sh, t.r0, t.c0), v01 = at(prev, sh, t.r0, t.c0 + 1);
      const S v10 = at(prev, sh, t.r0 + 1, t.c0), v11 = at(prev, sh, t.r0 + 1, t.c0 + 1);
      out[i] = (S(1) - t.ar) * ((S(1) - t.ac) * v00 + t.ac * v01) + t.ar * ((S(1) - t.ac) * v10 + t.ac * v11);
    }
  }
}

/// Bilinear-mode vector-Jacobian product. Accumulates into grad_prev,
/// grad_fx, grad_fy (any of which may be empty to skip it).
template <typename S>
void backward(std::span<const S> prev, std::span<const S> fx, std::span<const S> fy, std::span<const S> grad_out,
              std::span<S> grad_prev, std::span<S> grad_fx, std::span<S> grad_fy, PlaneShape sh) {
  auto scatter = [&](int r, int c, S g) {
    if (r >= 0 && r < sh.height && c >= 0 && c < sh.width)
      grad_prev[static_cast<std::size_t>(r) * sh.width + static_cast<std::size_t>(c)] += g;
  };
  for (int r = 0; r < sh.height; ++r) {
    for (int c = 0; c < sh.width; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * sh.width + c;
      const S g = grad_out[i];
      if (g == S(0)) continue;
      const Taps<S> t = locate(r, c, fx[i], fy[i]);
      if (!grad_prev.empty()) {
        scatter(t.r0, t.c0, g * (S(1) - t.ar) * (S(1) - t.ac));
        scatter(t.r0, t.c0 + 1, g * (S(1) - t.ar) * t.ac);
        scatter(t.r0 + 1, t.c0, g * t.ar * (S(1) - t.ac));
        scatter(t.r0 + 1, t.c0 + 1, g * t.ar * t.ac);
      }
      if (!grad_fx.empty() || !grad_fy.empty()) {
        const S v00 = at(prev, sh, t.r0, t.c0), v01 = at(prev, sh, t.r0, t.c0 + 1);
        const S v10 = at(prev, sh, t.r0 + 1, t.c0), v11 = at(prev, sh, t.r0 + 1, t.c0 + 1);
        const S d_col = (S(1) - t.ar) * (v01 - v00) + t.ar * (v11 - v10);
        const S d_row = (S(1) - t.ac) * (v10 - v00) + t.ac * (v11 - v01);
        // col = c + fx, row = r - fy
        if (!grad_fx.empty()) grad_fx[i] += g * d_col;
        if (!grad_fy.empty()) grad_fy[i] -= g * d_row;
      }
    }
  }
}

}  // namespace warp_kernel

/// Warps `prev` one step with backward flow `flow`.
inline Plane warp_once(const Plane& prev, const SceneFlowGrid& flow, Interp interp = Interp::kBilinear) {
  if (!prev.same_shape(flow.fx) || !prev.same_shape(flow.fy)) {
    throw GridError("warp_once: occupancy and flow shapes differ");
  }
  Plane out(prev.height(), prev.width());
  warp_kernel::forward<float>(prev.values(), flow.fx.values(), flow.fy.values(), out.values(),
                              {prev.height(), prev.width()}, interp);
  return out;
}

inline ScalarGrid warp_once(const ScalarGrid& prev, const SceneFlowGrid& flow, Interp interp = Interp::kBilinear) {
  require_same_geometry(prev.geometry, flow.geometry, "warp_once");
  ScalarGrid out;
  out.geometry = prev.geometry;
  out.values = warp_once(prev.values, flow, interp);
  return out;
}

/// Recursively warped occupancy grids W_1..W_T.
struct WarpedSequence {
  enum class Source { kVehicle, kDynamic };
  std::vector<Plane> grids;
  Source source = Source::kVehicle;
};

/// W_1 = warp(seed, flows[0]); W_k = warp(W_{k-1}, flows[k-1]).
inline WarpedSequence warp_sequence(const Plane& seed, const std::vector<SceneFlowGrid>& flows,
                                    Interp interp = Interp::kBilinear,
                                    WarpedSequence::Source source = WarpedSequence::Source::kVehicle) {
  if (flows.empty()) throw GridError("warp_sequence: empty flow list");
  for (std::size_t k = 1; k < flows.size(); ++k) {
    require_same_geometry(flows[0].geometry, flows[k].geometry, "warp_sequence");
  }
  WarpedSequence seq;
  seq.source = source;
  seq.grids.reserve(flows.size());
  for (const SceneFlowGrid& f : flows) {
    seq.grids.push_back(warp_once(seq.grids.empty() ? seed : seq.grids.back(), f, interp));
  }
  return seq;
}

}  // namespace gridcast

#endif  // GRIDCAST_WARP_HPP
