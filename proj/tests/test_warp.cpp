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

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gridcast/warp.hpp"

namespace gc = gridcast;

namespace {

const gc::GridGeometry kG8{8, 8, 1.0, {}};

gc::SceneFlowGrid uniform_flow(const gc::GridGeometry& g, float fx, float fy) {
  gc::SceneFlowGrid f(g);
  f.fx.fill(fx);
  f.fy.fill(fy);
  return f;
}

gc::Plane random_plane(int n, std::mt19937_64& rng, float lo, float hi) {
  std::uniform_real_distribution<float> u(lo, hi);
  gc::Plane p(n, n);
  for (float& v : p.values()) v = u(rng);
  return p;
}

// Oracle: explicit source coordinate per cell, read by (row, col) with
// bounds checking written independently of the kernel.
float gather_oracle(const gc::Plane& prev, int r, int c, double fx, double fy, bool bilinear) {
  const double sr = r - fy;
  const double sc = c + fx;
  auto read = [&](long rr, long cc) -> double {
    if (rr < 0 || cc < 0 || rr >= prev.height() || cc >= prev.width()) return 0.0;
    return prev(static_cast<int>(rr), static_cast<int>(cc));
  };
  if (!bilinear) return static_cast<float>(read(std::lround(std::floor(sr + 0.5)), std::lround(std::floor(sc + 0.5))));
  double acc = 0.0;
  const long r0 = static_cast<long>(std::floor(sr)), c0 = static_cast<long>(std::floor(sc));
  for (long dr = 0; dr <= 1; ++dr) {
    for (long dc = 0; dc <= 1; ++dc) {
      const double wr = 1.0 - std::abs(sr - static_cast<double>(r0 + dr));
      const double wc = 1.0 - std::abs(sc - static_cast<double>(c0 + dc));
      acc += wr * wc * read(r0 + dr, c0 + dc);
    }
  }
  return static_cast<float>(acc);
}

}  // namespace

TEST(WarpOnce, ZeroFlowIsIdentity) {
  std::mt19937_64 rng(1);
  const auto prev = random_plane(8, rng, 0, 1);
  for (auto mode : {gc::Interp::kNearest, gc::Interp::kBilinear}) {
    EXPECT_EQ(gc::warp_once(prev, uniform_flow(kG8, 0, 0), mode), prev);
  }
}

TEST(WarpOnce, SingleCellMovesAlongPlusX) {
  gc::Plane prev(8, 8);
  prev(4, 4) = 1.0f;
  // Backward flow (-1, 0): each cell reads from one column to its left.
  const auto out = gc::warp_once(prev, uniform_flow(kG8, -1, 0), gc::Interp::kNearest);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) EXPECT_EQ(out(r, c), (r == 4 && c == 5) ? 1.0f : 0.0f);
  }
  // +fy points toward row 0, so the source row is r - fy and occupancy
  // moves toward higher rows.
  const auto up = gc::warp_once(prev, uniform_flow(kG8, 0, 1), gc::Interp::kNearest);
  EXPECT_EQ(up(5, 4), 1.0f);
}

TEST(WarpOnce, MatchesGatherOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> fl(-3.5f, 3.5f);
  std::uniform_int_distribution<int> il(-3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto prev = random_plane(8, rng, 0, 1);
    gc::SceneFlowGrid f(kG8);
    const bool integer = trial % 2 == 0;
    for (std::size_t i = 0; i < f.fx.size(); ++i) {
      f.fx[i] = integer ? static_cast<float>(il(rng)) : fl(rng);
      f.fy[i] = integer ? static_cast<float>(il(rng)) : fl(rng);
    }
    const auto n = gc::warp_once(prev, f, gc::Interp::kNearest);
    const auto b = gc::warp_once(prev, f, gc::Interp::kBilinear);
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) {
        ASSERT_EQ(n(r, c), gather_oracle(prev, r, c, f.fx(r, c), f.fy(r, c), false));
        ASSERT_NEAR(b(r, c), gather_oracle(prev, r, c, f.fx(r, c), f.fy(r, c), true), 1e-6);
      }
    }
  }
}

TEST(WarpOnce, ConstantFieldInterior) {
  gc::Plane prev(8, 8, 0.4f);
  const auto out = gc::warp_once(prev, uniform_flow(kG8, 2, -1), gc::Interp::kBilinear);
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 6; ++c) EXPECT_FLOAT_EQ(out(r, c), 0.4f);
  }
}

TEST(WarpOnce, RejectsShapeMismatch) {
  gc::Plane prev(8, 8);
  EXPECT_THROW(gc::warp_once(prev, gc::SceneFlowGrid(gc::GridGeometry{4, 4, 1.0, {}})), gc::GridError);
  gc::ScalarGrid s(gc::GridGeometry{8, 8, 0.5, {}});
  EXPECT_THROW(gc::warp_once(s, uniform_flow(kG8, 0, 0)), gc::GridError);
}

TEST(WarpOnce, RangePreservation) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> fl(-2.5f, 2.5f);
  for (int trial = 0; trial < 50; ++trial) {
    const auto prev = random_plane(8, rng, 0.2f, 0.9f);
    gc::SceneFlowGrid f(kG8);
    for (std::size_t i = 0; i < f.fx.size(); ++i) {
      f.fx[i] = fl(rng);
      f.fy[i] = fl(rng);
    }
    const auto lo = *std::min_element(prev.values().begin(), prev.values().end());
    const auto hi = *std::max_element(prev.values().begin(), prev.values().end());
    const gc::Plane n = gc::warp_once(prev, f, gc::Interp::kNearest);
    const gc::Plane b = gc::warp_once(prev, f, gc::Interp::kBilinear);
    for (float v : n.values()) EXPECT_TRUE(v == 0.0f || (v >= lo && v <= hi));
    for (float v : b.values()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, hi + 1e-6f);
    }
  }
}

TEST(WarpOnce, MassUnderUniformShifts) {
  std::mt19937_64 rng(4);
  gc::Plane prev(8, 8);
  for (int r = 2; r < 6; ++r) {
    for (int c = 2; c < 6; ++c) prev(r, c) = 0.5f + 0.1f * (r + c);
  }
  auto mass = [](const gc::Plane& p) {
    double m = 0;
    for (float v : p.values()) m += v;
    return m;
  };
  EXPECT_NEAR(mass(gc::warp_once(prev, uniform_flow(kG8, 2, -1), gc::Interp::kNearest)), mass(prev), 1e-5);
  for (float fx : {0.3f, -1.7f, 2.5f}) {
    EXPECT_LE(mass(gc::warp_once(prev, uniform_flow(kG8, fx, 0.6f), gc::Interp::kBilinear)), mass(prev) + 1e-5);
  }
}

TEST(WarpSequence, ZeroFlowsRepeatSeed) {
  std::mt19937_64 rng(5);
  const auto seed = random_plane(8, rng, 0, 1);
  const auto seq = gc::warp_sequence(seed, std::vector<gc::SceneFlowGrid>(5, uniform_flow(kG8, 0, 0)));
  ASSERT_EQ(seq.grids.size(), 5u);
  for (const auto& g : seq.grids) EXPECT_EQ(g, seed);
}

TEST(WarpSequence, ShiftComposition) {
  std::mt19937_64 rng(6);
  const auto seed = random_plane(8, rng, 0, 1);
  const auto seq =
      gc::warp_sequence(seed, {uniform_flow(kG8, -1, 0), uniform_flow(kG8, -1, 0)}, gc::Interp::kNearest);
  const auto once = gc::warp_once(seed, uniform_flow(kG8, -2, 0), gc::Interp::kNearest);
  for (int r = 0; r < 8; ++r) {
    for (int c = 2; c < 8; ++c) {
      EXPECT_EQ(seq.grids[1](r, c), seed(r, c - 2));
      EXPECT_EQ(seq.grids[1](r, c), once(r, c));
    }
  }
}

TEST(WarpSequence, RejectsEmptyAndMixedGeometry) {
  gc::Plane seed(8, 8);
  EXPECT_THROW(gc::warp_sequence(seed, {}), gc::GridError);
  EXPECT_THROW(gc::warp_sequence(seed, {uniform_flow(kG8, 0, 0), uniform_flow({8, 8, 0.5, {}}, 0, 0)}),
               gc::GridError);
}

TEST(WarpSequence, DependsOnlyOnPrefix) {
  std::mt19937_64 rng(7);
  const auto seed = random_plane(8, rng, 0, 1);
  std::vector<gc::SceneFlowGrid> flows = {uniform_flow(kG8, 0.5f, 0.2f), uniform_flow(kG8, -0.3f, 0.1f),
                                          uniform_flow(kG8, 1.0f, 1.0f)};
  const auto a = gc::warp_sequence(seed, flows);
  flows[2] = uniform_flow(kG8, -2.0f, 0.0f);
  const auto b = gc::warp_sequence(seed, flows);
  EXPECT_EQ(a.grids[0], b.grids[0]);
  EXPECT_EQ(a.grids[1], b.grids[1]);
  EXPECT_NE(a.grids[2], b.grids[2]);
}

TEST(WarpKernel, BilinearGradientsMatchFiniteDifferences) {
  const gc::PlaneShape sh{6, 6};
  const std::size_t n = sh.cells();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0), f(-1.8, 1.8), frac(0.15, 0.85);
  std::vector<double> prev(n), fx(n), fy(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    prev[i] = u(rng);
    // Keep every sample strictly between integer positions.
    fx[i] = std::floor(f(rng)) + frac(rng);
    fy[i] = std::floor(f(rng)) + frac(rng);
    w[i] = u(rng) - 0.5;
  }
  auto loss = [&](const std::vector<double>& p, const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> out(n);
    gc::warp_kernel::forward<double>(p, x, y, out, sh, gc::Interp::kBilinear);
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * out[i];
    return s;
  };
  std::vector<double> gp(n, 0.0), gx(n, 0.0), gy(n, 0.0);
  gc::warp_kernel::backward<double>(prev, fx, fy, w, gp, gx, gy, sh);
  const double h = 1e-6;
  auto check = [&](std::vector<double>& v, const std::vector<double>& g) {
    for (std::size_t i = 0; i < n; ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = loss(prev, fx, fy);
      v[i] = keep - h;
      const double dn = loss(prev, fx, fy);
      v[i] = keep;
      const double fd = (up - dn) / (2 * h);
      EXPECT_NEAR(g[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << i;
    }
  };
  check(prev, gp);
  check(fx, gx);
  check(fy, gy);
}
