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

#include <cmath>

#include <gtest/gtest.h>

#include "gridcast/synth_world.hpp"
#include "gridcast/warp.hpp"

namespace gc = gridcast;

namespace {

const gc::GridGeometry kDesk{64, 64, 0.5, {}};

gc::AgentSpec box_agent(gc::AgentKind kind, gc::Pose2 pose, double length, double width, double speed,
                        double yaw_rate = 0.0) {
  gc::AgentSpec a;
  a.kind = kind;
  a.length = length;
  a.width = width;
  a.initial_pose = pose;
  a.segments = {{1e9, speed, yaw_rate}};
  return a;
}

/// Ego parked at the origin facing +x; grids are ego-centric.
gc::SceneScript empty_scene(double duration = 5.0) {
  gc::SceneScript s;
  s.duration = duration;
  s.ego = box_agent(gc::AgentKind::kVehicle, {0, 0, 0}, 4.6, 1.9, 0.0);
  return s;
}

// Independent segment intersection oracle: proper crossing of [p, q] with
// [a, b] (parametric form, endpoints inclusive).
bool segments_intersect(gc::Vec2 p, gc::Vec2 q, gc::Vec2 a, gc::Vec2 b) {
  const double d = (q.x - p.x) * (b.y - a.y) - (q.y - p.y) * (b.x - a.x);
  if (std::abs(d) < 1e-15) return false;
  const double s = ((a.x - p.x) * (b.y - a.y) - (a.y - p.y) * (b.x - a.x)) / d;
  const double u = ((a.x - p.x) * (q.y - p.y) - (a.y - p.y) * (q.x - p.x)) / d;
  return s >= 0 && s <= 1 && u >= 0 && u <= 1;
}

bool segment_hits_polygon(gc::Vec2 p, gc::Vec2 q, const gc::Polygon& poly) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    if (segments_intersect(p, q, poly[i], poly[(i + 1) % poly.size()])) return true;
  }
  return false;
}

// Brute-force convex overlap oracle: any vertex inside the other polygon or
// any pair of edges crossing.
bool polygons_overlap_oracle(const gc::Polygon& a, const gc::Polygon& b) {
  for (const auto& v : a) {
    if (gc::point_in_polygon(b, v)) return true;
  }
  for (const auto& v : b) {
    if (gc::point_in_polygon(a, v)) return true;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (segments_intersect(a[i], a[(i + 1) % a.size()], b[j], b[(j + 1) % b.size()])) return true;
    }
  }
  return false;
}

double iou(const gc::Plane& a, const gc::Plane& b) {
  double inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] >= 0.5f, y = b[i] >= 0.5f;
    inter += x && y;
    uni += x || y;
  }
  return uni > 0 ? inter / uni : 1.0;
}

}  // namespace

TEST(GenerateScene, Deterministic) {
  const gc::WorldConfig cfg;
  const auto a = gc::generate_scene(7, cfg);
  const auto b = gc::generate_scene(7, cfg);
  EXPECT_EQ(a, b);
  EXPECT_EQ(nlohmann::json(a).dump(), nlohmann::json(b).dump());
  EXPECT_NE(nlohmann::json(a).dump(), nlohmann::json(gc::generate_scene(8, cfg)).dump());
}

TEST(GenerateScene, EmptyAgentConfig) {
  gc::WorldConfig cfg;
  cfg.vehicles = cfg.pedestrians = cfg.cyclists = 0;
  const auto s = gc::generate_scene(3, cfg);
  EXPECT_TRUE(s.agents.empty());
  EXPECT_EQ(static_cast<int>(s.static_shapes.size()), cfg.static_shapes);
}

TEST(GenerateScene, CountsAndNoInitialOverlap) {
  gc::WorldConfig cfg;
  cfg.vehicles = 5;
  cfg.pedestrians = 3;
  cfg.cyclists = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = gc::generate_scene(seed, cfg);
    int veh = 0, ped = 0;
    for (const auto& a : s.agents) {
      veh += a.kind == gc::AgentKind::kVehicle;
      ped += a.kind == gc::AgentKind::kPedestrian;
    }
    EXPECT_EQ(veh, 5);
    EXPECT_EQ(ped, 3);
    std::vector<gc::Polygon> shapes = s.static_shapes;
    shapes.push_back(s.ego.footprint_at(0.0));
    for (const auto& a : s.agents) shapes.push_back(a.footprint_at(0.0));
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      for (std::size_t j = i + 1; j < shapes.size(); ++j) {
        ASSERT_FALSE(polygons_overlap_oracle(shapes[i], shapes[j])) << "seed " << seed << " pair " << i << "," << j;
      }
    }
    // Ego path clear of static structures.
    for (double t = 0.0; t <= s.duration; t += 0.1) {
      for (const auto& st : s.static_shapes) ASSERT_FALSE(polygons_overlap_oracle(s.ego.footprint_at(t), st));
    }
  }
}

TEST(GenerateScene, UnsatisfiablePlacementReportsSeed) {
  gc::WorldConfig cfg;
  cfg.vehicles = 400;
  cfg.spawn_margin = 1.0;
  cfg.ego_speed = {0.0, 0.0};
  cfg.max_retries = 5;
  try {
    gc::generate_scene(42, cfg);
    FAIL() << "expected SceneError";
  } catch (const gc::SceneError& e) {
    EXPECT_NE(std::string(e.what()).find("seed=42"), std::string::npos);
  }
}

TEST(AgentSpec, ValidatesFootprintAndSpeed) {
  auto ok = box_agent(gc::AgentKind::kVehicle, {}, 4.0, 1.8, 3.0);
  EXPECT_NO_THROW(gc::validate(ok));
  auto small_car = box_agent(gc::AgentKind::kVehicle, {}, 3.0, 1.8, 3.0);
  EXPECT_THROW(gc::validate(small_car), gc::GridError);
  auto big_ped = box_agent(gc::AgentKind::kPedestrian, {}, 0.9, 0.5, 1.0);
  EXPECT_THROW(gc::validate(big_ped), gc::GridError);
  auto fast = box_agent(gc::AgentKind::kCyclist, {}, 1.8, 0.7, 16.0);
  EXPECT_THROW(gc::validate(fast), gc::GridError);
}

TEST(AgentSpec, ClosedFormTrajectories) {
  const auto cv = box_agent(gc::AgentKind::kVehicle, {1, 2, 0}, 4, 2, 3.0);
  EXPECT_NEAR(cv.pose_at(2.0).x, 7.0, 1e-12);
  // Quarter circle of radius v / w.
  const auto turn = box_agent(gc::AgentKind::kVehicle, {0, 0, 0}, 4, 2, 2.0, 0.5);
  const auto p = turn.pose_at(gc::kPi);  // w * t = pi / 2
  EXPECT_NEAR(p.x, 4.0, 1e-9);
  EXPECT_NEAR(p.y, 4.0, 1e-9);
  EXPECT_NEAR(p.heading, gc::kPi / 2, 1e-12);
  gc::AgentSpec sg = cv;
  sg.segments = {{1.0, 2.0, 0.0}, {1.0, 0.0, 0.0}, {1e9, 2.0, 0.0}};
  EXPECT_NEAR(sg.pose_at(2.5).x, 1.0 + 2.0 + 1.0, 1e-12);
  EXPECT_FALSE(sg.dynamic_at(1.5));
  EXPECT_TRUE(sg.dynamic_at(0.5));
}

TEST(RenderFrame, NoiselessStaticBox) {
  auto s = empty_scene();
  s.static_shapes.push_back(gc::make_rectangle({6.0, 0.0, 0.0}, 2.0, 2.0));
  const auto g = gc::ego_centric_geometry(s, 0.0, kDesk);
  const auto f = gc::render_frame(s, 0.0, gc::SensorModel::noiseless(), g);
  int inside = 0;
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      EXPECT_EQ(f.velocity.vx(r, c), 0.0f);
      EXPECT_EQ(f.velocity.vy(r, c), 0.0f);
      if (gc::point_in_polygon(s.static_shapes[0], g.cell_to_world(r, c))) {
        ++inside;
        EXPECT_EQ(f.states.stat(r, c), 1.0f);
        EXPECT_EQ(f.states.dyn(r, c), 0.0f);
        EXPECT_EQ(f.states.unk(r, c), 0.0f);
        EXPECT_EQ(f.vehicles.prob(r, c), 0.0f);
      }
    }
  }
  EXPECT_EQ(inside, 16);
}

TEST(RenderFrame, ShadowMatchesSegmentOracle) {
  auto s = empty_scene();
  const gc::Pose2 wall{5.0, 1.0, 0.3};
  s.static_shapes.push_back(gc::make_rectangle(wall, 0.6, 5.0));
  const auto shrunk = gc::make_rectangle(wall, 0.3, 4.4);
  const auto grown = gc::make_rectangle(wall, 1.2, 5.8);
  const auto g = gc::ego_centric_geometry(s, 0.0, kDesk);
  const auto f = gc::render_frame(s, 0.0, gc::SensorModel::noiseless(), g);
  const gc::Vec2 ego{0, 0};
  int shadowed = 0, lit = 0;
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const gc::Vec2 p = g.cell_to_world(r, c);
      if (gc::point_in_polygon(grown, p)) continue;
      if (segment_hits_polygon(ego, p, shrunk)) {
        ++shadowed;
        EXPECT_EQ(f.states.unk(r, c), 1.0f) << r << "," << c;
      } else if (!segment_hits_polygon(ego, p, grown)) {
        ++lit;
        EXPECT_EQ(f.states.unk(r, c), 0.0f) << r << "," << c;
      }
    }
  }
  EXPECT_GT(shadowed, 100);
  EXPECT_GT(lit, 1000);
}

TEST(RenderFrame, MovingVehicleVelocity) {
  auto s = empty_scene();
  s.agents.push_back(box_agent(gc::AgentKind::kVehicle, {-4.0, 5.0, 0.5}, 4.5, 1.9, 5.0));
  gc::SensorModel sensor;
  sensor.dropout_rate = 0.0;
  const auto g = gc::ego_centric_geometry(s, 0.0, kDesk);
  const auto f = gc::render_frame(s, 0.0, sensor, g);
  const auto fp = s.agents[0].footprint_at(0.0);
  int cells = 0;
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      if (!gc::point_in_polygon(fp, g.cell_to_world(r, c))) continue;
      ++cells;
      EXPECT_GT(f.states.dyn(r, c), 0.75f);
      EXPECT_NEAR(std::hypot(f.velocity.vx(r, c), f.velocity.vy(r, c)), 5.0, 5 * sensor.velocity_noise);
    }
  }
  EXPECT_GT(cells, 20);
}

TEST(RenderFrame, EgoExcludedAndTimeChecked) {
  auto s = empty_scene();
  const auto g = gc::ego_centric_geometry(s, 0.0, kDesk);
  const auto f = gc::render_frame(s, 0.0, gc::SensorModel::noiseless(), g);
  const auto m = gc::vehicle_mask(s, 0.0, g);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      if (gc::point_in_polygon(s.ego.footprint_at(0.0), g.cell_to_world(r, c))) {
        EXPECT_EQ(f.vehicles.prob(r, c), 0.0f);
        EXPECT_EQ(m.prob(r, c), 0.0f);
        EXPECT_EQ(f.states.stat(r, c) + f.states.dyn(r, c), 0.0f);
      }
    }
  }
  EXPECT_THROW(gc::render_frame(s, -0.5, gc::SensorModel::noiseless(), g), gc::GridError);
  EXPECT_THROW(gc::render_frame(s, 5.5, gc::SensorModel::noiseless(), g), gc::GridError);
}

TEST(RenderFrame, NoisyFrameStaysValidAndDeterministic) {
  const auto s = gc::generate_scene(11, gc::WorldConfig{});
  const auto g = gc::ego_centric_geometry(s, 2.0, kDesk);
  const auto a = gc::render_frame(s, 2.0, gc::SensorModel{}, g);
  const auto b = gc::render_frame(s, 2.0, gc::SensorModel{}, g);
  EXPECT_NO_THROW(gc::validate(a.states));
  EXPECT_EQ(a.states.dyn, b.states.dyn);
  EXPECT_EQ(a.velocity.vx, b.velocity.vx);
  for (std::size_t i = 0; i < a.states.dyn.size(); ++i) {
    if (a.states.dyn[i] <= 0.0f) {
      EXPECT_EQ(a.velocity.vx[i], 0.0f);
    }
  }
}

TEST(RenderFrame, VisibilityMonotoneInRange) {
  gc::WorldConfig cfg;
  cfg.vehicles = 0;
  cfg.pedestrians = 0;
  cfg.cyclists = 0;
  const auto s = gc::generate_scene(5, cfg);
  const auto g = gc::ego_centric_geometry(s, 0.0, kDesk);
  double prev = 1e18;
  for (double range : {4.0, 8.0, 12.0, 20.0, 40.0}) {
    const auto f = gc::render_frame(s, 0.0, gc::SensorModel::noiseless(range, 720), g);
    double mass = 0;
    for (float v : f.states.unk.values()) mass += v;
    EXPECT_LE(mass, prev);
    prev = mass;
  }
}

TEST(GroundTruthFlow, StationaryAgentHasZeroFlow) {
  auto s = empty_scene();
  s.agents.push_back(box_agent(gc::AgentKind::kVehicle, {6, 3, 0.2}, 4.5, 1.9, 0.0));
  const auto g = gc::ego_centric_geometry(s, 1.0, kDesk);
  const auto f = gc::ground_truth_flow(s, 1.0, 0.5, g);
  for (std::size_t i = 0; i < f.fx.size(); ++i) {
    EXPECT_EQ(f.fx[i], 0.0f);
    EXPECT_EQ(f.fy[i], 0.0f);
  }
}

TEST(GroundTruthFlow, TwoCellsPerStepAlongX) {
  // Ego heading +pi/2 so the grid frame equals the world frame.
  auto s = empty_scene();
  s.ego.initial_pose = {0, 0, gc::kPi / 2};
  // 2 cells/step = 1 m per 0.5 s = 2 m/s along +x.
  s.agents.push_back(box_agent(gc::AgentKind::kVehicle, {-8, 6, 0}, 4.5, 1.9, 2.0));
  const auto g = gc::ego_centric_geometry(s, 1.0, kDesk);
  EXPECT_NEAR(g.origin_pose.heading, 0.0, 1e-12);
  const auto f = gc::ground_truth_flow(s, 1.0, 0.5, g);
  const auto fp = s.agents[0].footprint_at(1.0);
  int cells = 0;
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const bool in = gc::point_in_polygon(fp, g.cell_to_world(r, c));
      cells += in;
      EXPECT_NEAR(f.fx(r, c), in ? -2.0 : 0.0, 1e-5);
      EXPECT_NEAR(f.fy(r, c), 0.0, 1e-5);
    }
  }
  EXPECT_GT(cells, 0);
}

TEST(GroundTruthFlow, OpposingAgentsMatchCentroidOracle) {
  auto s = empty_scene();
  s.ego.initial_pose = {0, 0, 0.4};
  s.agents.push_back(box_agent(gc::AgentKind::kVehicle, {-6, 5, 0.1}, 4.5, 1.9, 3.0));
  s.agents.push_back(box_agent(gc::AgentKind::kCyclist, {6, -5, gc::kPi + 0.1}, 1.8, 0.7, 2.5));
  const double t = 1.0, step = 0.5;
  const auto g = gc::ego_centric_geometry(s, t, kDesk);
  const auto f = gc::ground_truth_flow(s, t, step, g);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& a = s.agents[k];
    // Oracle: world displacement expressed in the grid axes, divided by resolution.
    const gc::Vec2 d = a.pose_at(t - step).translation() - a.pose_at(t).translation();
    const double h = g.origin_pose.heading;
    const double ex = (std::cos(h) * d.x + std::sin(h) * d.y) / g.resolution;
    const double ey = (-std::sin(h) * d.x + std::cos(h) * d.y) / g.resolution;
    int cells = 0;
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        if (!gc::point_in_polygon(a.footprint_at(t), g.cell_to_world(r, c))) continue;
        ++cells;
        EXPECT_NEAR(f.fx(r, c), ex, 1e-5);
        EXPECT_NEAR(f.fy(r, c), ey, 1e-5);
      }
    }
    EXPECT_GT(cells, 0);
  }
}

TEST(BuildSample, ShapesAndWindowCheck) {
  const auto s = gc::generate_scene(1, gc::WorldConfig{});
  const auto sample = gc::build_sample(s, 2.0, 2, 5, 0.5, gc::SensorModel{}, kDesk);
  EXPECT_EQ(sample.history.size(), 3u);
  EXPECT_EQ(sample.future.size(), 5u);
  EXPECT_EQ(sample.history_length(), 2);
  for (const auto& f : sample.history) EXPECT_EQ(f.geometry, sample.geometry());
  for (const auto& ft : sample.future) {
    EXPECT_EQ(ft.flow.geometry, sample.geometry());
    EXPECT_NO_THROW(gc::validate(ft.ogm));
  }
  EXPECT_THROW(gc::build_sample(s, 0.5, 2, 5, 0.5, gc::SensorModel{}, kDesk), gc::GridError);
  EXPECT_THROW(gc::build_sample(s, 8.0, 2, 5, 0.5, gc::SensorModel{}, kDesk), gc::GridError);
}

TEST(BuildSample, StaticWorldFutureMatchesPresent) {
  gc::WorldConfig cfg;
  cfg.vehicles = cfg.pedestrians = cfg.cyclists = 0;
  cfg.ego_speed = {0.0, 0.0};
  const auto s = gc::generate_scene(9, cfg);
  const auto sample = gc::build_sample(s, 1.0, 2, 5, 0.5, gc::SensorModel::noiseless(20.0, 720), kDesk);
  const auto now = gc::render_frame(s, 1.0, gc::SensorModel::noiseless(20.0, 720), sample.geometry());
  for (const auto& ft : sample.future) {
    EXPECT_EQ(ft.ogm.unk, now.states.unk);
    EXPECT_EQ(ft.ogm.stat, now.states.stat);
    EXPECT_EQ(ft.ogm.dyn, now.states.dyn);
  }
}

TEST(BuildSample, CleanupRuleAndClassMasks) {
  auto s = empty_scene(6.0);
  s.agents.push_back(box_agent(gc::AgentKind::kVehicle, {-6, 5, 0}, 4.5, 1.9, 2.0));
  s.agents.push_back(box_agent(gc::AgentKind::kVehicle, {4, -5, 0}, 4.5, 1.9, 0.1));  // below threshold
  s.agents.push_back(box_agent(gc::AgentKind::kPedestrian, {3, 4, 0}, 0.6, 0.6, 1.0));
  const auto sample = gc::build_sample(s, 1.0, 2, 5, 0.5, gc::SensorModel{}, kDesk);
  for (int tau = 1; tau <= 5; ++tau) {
    const double t = 1.0 + 0.5 * tau;
    const auto& ft = sample.future[tau - 1];
    const auto& g = sample.geometry();
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        const gc::Vec2 p = g.cell_to_world(r, c);
        const bool moving = gc::point_in_polygon(s.agents[0].footprint_at(t), p);
        const bool slow = gc::point_in_polygon(s.agents[1].footprint_at(t), p);
        const bool ped = gc::point_in_polygon(s.agents[2].footprint_at(t), p);
        if (ft.ogm.unk(r, c) == 0.0f) {
          if (moving || ped) {
            EXPECT_EQ(ft.ogm.dyn(r, c), 1.0f);
          }
          if (slow) {
            EXPECT_EQ(ft.ogm.stat(r, c), 1.0f);
          }
        }
        EXPECT_EQ(ft.veh.prob(r, c), (moving || slow) ? 1.0f : 0.0f);
        EXPECT_EQ(ft.dynamic_by_class[0](r, c), moving ? 1.0f : 0.0f);
        EXPECT_EQ(ft.dynamic_by_class[1](r, c), ped ? 1.0f : 0.0f);
      }
    }
  }
}

TEST(BuildSample, ConstantVelocityMaskShift) {
  // Axis-aligned vehicle moving 2 cells per step along grid +x.
  auto s = empty_scene(6.0);
  s.ego.initial_pose = {0, 0, gc::kPi / 2};
  s.agents.push_back(box_agent(gc::AgentKind::kVehicle, {-10.0, 5.0, 0.0}, 4.0, 2.0, 2.0));
  const auto sample = gc::build_sample(s, 1.0, 2, 5, 0.5, gc::SensorModel::noiseless(), kDesk);
  for (int tau = 2; tau <= 5; ++tau) {
    const auto& prev = sample.future[tau - 2].veh.prob;
    const auto& cur = sample.future[tau - 1].veh.prob;
    for (int r = 0; r < 64; ++r) {
      for (int c = 0; c < 64; ++c) {
        const float shifted = c - 2 >= 0 ? prev(r, c - 2) : 0.0f;
        ASSERT_EQ(cur(r, c), shifted) << "tau " << tau << " cell " << r << "," << c;
      }
    }
  }
}

TEST(BuildSample, GroundTruthWarpCoversNextMask) {
  // Backward gather with the centroid flow reaches every cell of the next
  // footprint (recall 1); cells the agent leaves keep their old value.
  const auto s = gc::generate_scene(21, gc::WorldConfig{});
  const auto sample = gc::build_sample(s, 3.0, 2, 5, 0.5, gc::SensorModel{}, kDesk);
  gc::Plane prev = sample.det_veh.prob;
  for (const auto& ft : sample.future) {
    const gc::Plane w = gc::warp_once(prev, ft.flow, gc::Interp::kNearest);
    double hit = 0, total = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (ft.veh.prob[i] < 0.5f) continue;
      total += 1;
      hit += w[i] >= 0.5f;
    }
    if (total > 0) {
      EXPECT_GT(hit / total, 0.9);
    }
    prev = ft.veh.prob;
  }
  (void)iou;
}

TEST(TwoFuturesScene, BranchesShareHistoryAndDiverge) {
  const auto a = gc::generate_two_futures_scene(3, 0);
  const auto b = gc::generate_two_futures_scene(3, 1);
  const auto sa = gc::build_sample(a, 2.0, 2, 5, 0.5, gc::SensorModel{}, kDesk);
  const auto sb = gc::build_sample(b, 2.0, 2, 5, 0.5, gc::SensorModel{}, kDesk);
  for (std::size_t k = 0; k < sa.history.size(); ++k) {
    for (int ch = 0; ch < gc::kFrameChannels; ++ch) EXPECT_EQ(sa.history[k].channels[ch], sb.history[k].channels[ch]);
  }
  EXPECT_LT(iou(sa.future.back().veh.prob, sb.future.back().veh.prob), 0.2);
}

TEST(SceneScriptJson, RoundTrip) {
  const auto s = gc::generate_scene(4, gc::WorldConfig{});
  const auto back = nlohmann::json(s).get<gc::SceneScript>();
  EXPECT_EQ(back, s);
  gc::WorldConfig cfg = nlohmann::json::parse(R"({"vehicles": 2})").get<gc::WorldConfig>();
  EXPECT_EQ(cfg.vehicles, 2);
  EXPECT_EQ(cfg.pedestrians, gc::WorldConfig{}.pedestrians);
}
