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

#ifndef GRIDCAST_SYNTH_WORLD_HPP
#define GRIDCAST_SYNTH_WORLD_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcast/grid.hpp"
#include "gridcast/json_util.hpp"
#include "gridcast/polygon.hpp"

/// \file
/// Deterministic synthetic bird's-eye-view world. A SceneScript is the
/// ground-truth description of a scene; every grid (noisy sensor frames,
/// exact vehicle masks, centroid flow, noiseless occupancy targets) is
/// rendered from it as a pure function.

namespace gridcast {

/// Agents slower than this are labeled static.
inline constexpr double kStaticSpeedThreshold = 0.2;

class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AgentKind { kVehicle, kPedestrian, kCyclist };
enum class TrajectoryModel { kConstantVelocity, kConstantTurnRate, kStopAndGo };

inline AgentClass agent_class(AgentKind k) { return static_cast<AgentClass>(static_cast<int>(k)); }

/// Constant speed and yaw rate for `duration` seconds.
struct MotionSegment {
  double duration = 0.0;
  double speed = 0.0;
  double yaw_rate = 0.0;

  friend bool operator==(const MotionSegment&, const MotionSegment&) = default;
};

struct AgentSpec {
  AgentKind kind = AgentKind::kVehicle;
  double length = 4.5;
  double width = 1.9;
  TrajectoryModel model = TrajectoryModel::kConstantVelocity;
  Pose2 initial_pose;
  /// Played back in order; the last segment extends indefinitely.
  std::vector<MotionSegment> segments;

  friend bool operator==(const AgentSpec&, const AgentSpec&) = default;

  [[nodiscard]] Pose2 pose_at(double t) const {
    Pose2 p = initial_pose;
    double elapsed = 0.0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const MotionSegment& s = segments[i];
      const bool last = i + 1 == segments.size();
      const double dt = last ? t - elapsed : std::min(s.duration, t - elapsed);
      if (dt <= 0.0) break;
      advance(p, s.speed, s.yaw_rate, dt);
      elapsed += dt;
    }
    return p;
  }

  [[nodiscard]] const MotionSegment* segment_at(double t) const {
    double elapsed = 0.0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      elapsed += segments[i].duration;
      if (t < elapsed || i + 1 == segments.size()) return &segments[i];
    }
    return nullptr;
  }

  [[nodiscard]] double speed_at(double t) const {
    const MotionSegment* s = segment_at(t);
    return s ? s->speed : 0.0;
  }

  [[nodiscard]] bool dynamic_at(double t) const { return speed_at(t) > kStaticSpeedThreshold; }

  /// World-frame velocity in m/s.
  [[nodiscard]] Vec2 velocity_at(double t) const {
    const double v = speed_at(t);
    const double h = pose_at(t).heading;
    return {v * std::cos(h), v * std::sin(h)};
  }

  [[nodiscard]] Polygon footprint_at(double t) const { return make_rectangle(pose_at(t), length, width); }

 private:
  static void advance(Pose2& p, double v, double w, double dt) {
    if (std::abs(w) < 1e-12) {
      p.x += v * dt * std::cos(p.heading);
      p.y += v * dt * std::sin(p.heading);
    } else {
      const double h1 = p.heading + w * dt;
      p.x += v / w * (std::sin(h1) - std::sin(p.heading));
      p.y -= v / w * (std::cos(h1) - std::cos(p.heading));
      p.heading = h1;
    }
  }
};

struct SceneScript {
  std::vector<Polygon> static_shapes;
  std::vector<AgentSpec> agents;
  AgentSpec ego;
  double duration = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const SceneScript&, const SceneScript&) = default;
};

inline constexpr double kMaxAgentSpeed = 15.0;

inline void validate(const AgentSpec& a) {
  if (a.kind == AgentKind::kVehicle && (a.length < 3.5 || a.width < 1.6))
    throw GridError("agent: vehicle footprint must be at least 3.5 x 1.6 m");
  if (a.kind == AgentKind::kPedestrian && (a.length > 0.8 || a.width > 0.8))
    throw GridError("agent: pedestrian footprint must be at most 0.8 x 0.8 m");
  if (!(a.length > 0.0 && a.width > 0.0)) throw GridError("agent: footprint must be positive");
  if (a.segments.empty()) throw GridError("agent: at least one motion segment required");
  for (const MotionSegment& s : a.segments) {
    if (!(s.speed >= 0.0 && s.speed <= kMaxAgentSpeed)) throw GridError("agent: speed outside [0, 15] m/s");
    if (!(s.duration >= 0.0) || !std::isfinite(s.yaw_rate)) throw GridError("agent: invalid segment");
  }
  if (!a.initial_pose.finite()) throw GridError("agent: non-finite initial pose");
}

inline void validate(const SceneScript& s) {
  if (!(s.duration > 0.0)) throw GridError("scene script: duration must be positive");
  validate(s.ego);
  for (const AgentSpec& a : s.agents) validate(a);
}

struct SensorModel {
  double max_range = 20.0;
  int ray_count = 720;
  double state_noise = 0.05;
  double dropout_rate = 0.05;
  double velocity_noise = 0.2;

  [[nodiscard]] static SensorModel noiseless(double max_range = 1e9, int ray_count = 2880) {
    return {max_range, ray_count, 0.0, 0.0, 0.0};
  }
};

inline void validate(const SensorModel& s) {
  if (!(s.max_range >= 0.0) || s.ray_count < 1 || !(s.state_noise >= 0.0) || !(s.velocity_noise >= 0.0) ||
      !(s.dropout_rate >= 0.0 && s.dropout_rate <= 1.0)) {
    throw GridError("sensor model: parameters must be non-negative, ray_count >= 1, dropout_rate <= 1");
  }
}

using Range = std::array<double, 2>;

/// Parameters of the procedural urban scene generator.
struct WorldConfig {
  int vehicles = 6;
  int pedestrians = 4;
  int cyclists = 1;
  int static_shapes = 6;
  double duration = 10.0;
  double parked_fraction = 0.25;
  double turn_probability = 0.25;
  double stop_and_go_probability = 0.15;
  Range vehicle_speed{1.5, 4.0};
  Range pedestrian_speed{0.6, 1.5};
  Range cyclist_speed{2.0, 3.5};
  Range ego_speed{0.0, 2.5};
  double road_half_width = 7.0;
  double spawn_margin = 16.0;
  int max_retries = 200;
};

inline void validate(const WorldConfig& c) {
  auto range_ok = [](const Range& r, double hi) { return r[0] >= 0.0 && r[0] <= r[1] && r[1] <= hi; };
  if (c.vehicles < 0 || c.pedestrians < 0 || c.cyclists < 0 || c.static_shapes < 0)
    throw GridError("world config: agent counts must be >= 0");
  if (!(c.duration > 0.0)) throw GridError("world config: duration must be positive");
  if (!range_ok(c.vehicle_speed, 15.0) || !range_ok(c.pedestrian_speed, 15.0) ||
      !range_ok(c.cyclist_speed, 15.0) || !range_ok(c.ego_speed, 15.0))
    throw GridError("world config: speed ranges must satisfy 0 <= lo <= hi <= 15");
  if (!(c.road_half_width > 2.0)) throw GridError("world config: road_half_width must exceed 2 m");
  if (c.max_retries < 1) throw GridError("world config: max_retries must be >= 1");
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : engine_(splitmix64(seed)) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double uniform(const Range& r) { return r[0] == r[1] ? r[0] : uniform(r[0], r[1]); }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }
  double sign() { return bernoulli(0.5) ? 1.0 : -1.0; }

 private:
  std::mt19937_64 engine_;
};

inline bool overlaps_any(const Polygon& p, const std::vector<Polygon>& others) {
  for (const Polygon& o : others) {
    if (convex_polygons_overlap(p, o)) return true;
  }
  return false;
}

inline AgentSpec make_ego(double speed) {
  AgentSpec ego;
  ego.kind = AgentKind::kVehicle;
  ego.length = 4.6;
  ego.width = 1.9;
  ego.initial_pose = {0.0, 0.0, 0.0};
  ego.segments = {{1e9, speed, 0.0}};
  return ego;
}

}  // namespace detail

/// Procedurally generates an urban street scene: the ego drives along the
/// world x axis on a straight road lined with buildings; vehicles, cyclists
/// and pedestrians are scattered around the ego path.
inline SceneScript generate_scene(std::uint64_t seed, const WorldConfig& cfg) {
  validate(cfg);
  detail::SceneRng rng(seed);
  SceneScript script;
  script.seed = seed;
  script.duration = cfg.duration;
  script.ego = detail::make_ego(rng.uniform(cfg.ego_speed));

  const double path_end = script.ego.segments.front().speed * cfg.duration;
  const double x_lo = -cfg.spawn_margin;
  const double x_hi = path_end + cfg.spawn_margin;
  const double rhw = cfg.road_half_width;
  const double sidewalk = 2.5;

  auto fail = [&](const std::string& what) {
    throw SceneError("generate_scene(seed=" + std::to_string(seed) + "): could not place " + what + " after " +
                     std::to_string(cfg.max_retries) + " retries");
  };

  std::vector<Polygon> ego_sweep;
  for (double t = 0.0; t <= cfg.duration + 1e-9; t += 0.25) ego_sweep.push_back(script.ego.footprint_at(t));

  for (int i = 0; i < cfg.static_shapes; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      const double length = rng.uniform(4.0, 12.0);
      const double depth = rng.uniform(3.0, 8.0);
      const double side = rng.sign();
      const double gap = rng.uniform(0.0, 2.0);
      const Pose2 pose{rng.uniform(x_lo, x_hi), side * (rhw + sidewalk + gap + 0.5 * depth),
                       rng.uniform(-0.15, 0.15)};
      Polygon shape = make_rectangle(pose, length, depth);
      if (detail::overlaps_any(shape, script.static_shapes) || detail::overlaps_any(shape, ego_sweep)) continue;
      script.static_shapes.push_back(std::move(shape));
      placed = true;
    }
    if (!placed) fail("static shape " + std::to_string(i));
  }

  std::vector<Polygon> occupied = script.static_shapes;
  occupied.push_back(script.ego.footprint_at(0.0));

  auto place = [&](int index, const char* what, auto&& propose) {
    for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
      AgentSpec a = propose();
      Polygon fp = a.footprint_at(0.0);
      if (detail::overlaps_any(fp, occupied)) continue;
      occupied.push_back(std::move(fp));
      script.agents.push_back(std::move(a));
      return;
    }
    fail(std::string(what) + " " + std::to_string(index));
  };

  for (int i = 0; i < cfg.vehicles; ++i) {
    place(i, "vehicle", [&] {
      AgentSpec a;
      a.kind = AgentKind::kVehicle;
      a.length = rng.uniform(3.8, 5.0);
      a.width = rng.uniform(1.7, 2.0);
      const double dir = rng.sign();  // +1 drives toward +x on the y<0 lane
      const double heading = dir > 0 ? 0.0 : kPi;
      if (rng.bernoulli(cfg.parked_fraction)) {
        a.initial_pose = {rng.uniform(x_lo, x_hi), -dir * (rhw - 1.2), heading};
        a.segments = {{1e9, 0.0, 0.0}};
        return a;
      }
      a.initial_pose = {rng.uniform(x_lo, x_hi), -dir * 0.5 * rhw, heading};
      const double v = rng.uniform(cfg.vehicle_speed);
      const double t1 = rng.uniform(1.0, 0.6 * cfg.duration);
      if (rng.bernoulli(cfg.turn_probability)) {
        a.model = TrajectoryModel::kConstantTurnRate;
        const double yaw_rate = rng.sign() * rng.uniform(0.3, 0.6);
        a.segments = {{t1, v, 0.0}, {0.5 * kPi / std::abs(yaw_rate), v, yaw_rate}, {1e9, v, 0.0}};
      } else if (rng.bernoulli(cfg.stop_and_go_probability)) {
        a.model = TrajectoryModel::kStopAndGo;
        a.segments = {{t1, v, 0.0}, {rng.uniform(1.0, 3.0), 0.0, 0.0}, {1e9, v, 0.0}};
      } else {
        a.segments = {{1e9, v, 0.0}};
      }
      return a;
    });
  }

  for (int i = 0; i < cfg.cyclists; ++i) {
    place(i, "cyclist", [&] {
      AgentSpec a;
      a.kind = AgentKind::kCyclist;
      a.length = 1.8;
      a.width = 0.7;
      const double dir = rng.sign();
      a.initial_pose = {rng.uniform(x_lo, x_hi), -dir * (rhw - 0.9), dir > 0 ? 0.0 : kPi};
      a.segments = {{1e9, rng.uniform(cfg.cyclist_speed), 0.0}};
      return a;
    });
  }

  for (int i = 0; i < cfg.pedestrians; ++i) {
    place(i, "pedestrian", [&] {
      AgentSpec a;
      a.kind = AgentKind::kPedestrian;
      a.length = 0.7;
      a.width = 0.7;
      const double side = rng.sign();
      double heading = rng.bernoulli(0.5) ? 0.0 : kPi;
      if (rng.bernoulli(0.25)) heading = side > 0 ? -0.5 * kPi : 0.5 * kPi;  // crossing toward the road
      a.initial_pose = {rng.uniform(x_lo, x_hi), side * (rhw + rng.uniform(0.4, sidewalk - 0.4)), heading};
      a.segments = {{1e9, rng.uniform(cfg.pedestrian_speed), 0.0}};
      return a;
    });
  }
  validate(script);
  return script;
}

/// Four-way intersection with a single vehicle that either continues
/// straight (`branch == 0`) or turns left (`branch == 1`) at the
/// intersection time `branch_time`. Scripts of both branches share their
/// seed, so their sensor noise and their histories before `branch_time` are
/// identical.
inline SceneScript generate_two_futures_scene(std::uint64_t seed, int branch, double branch_time = 2.0,
                                              double horizon = 3.0) {
  if (branch != 0 && branch != 1) throw GridError("two-futures scene: branch must be 0 or 1");
  detail::SceneRng rng(seed);
  SceneScript script;
  script.seed = seed;
  script.duration = branch_time + horizon;

  script.ego = detail::make_ego(0.0);
  script.ego.initial_pose = {2.5, -9.0, 0.5 * kPi};

  for (const double sx : {-1.0, 1.0}) {
    for (const double sy : {-1.0, 1.0}) {
      script.static_shapes.push_back(make_rectangle({sx * 12.5, sy * 12.5, 0.0}, 12.0, 12.0));
    }
  }

  AgentSpec car;
  car.kind = AgentKind::kVehicle;
  car.length = 4.4;
  car.width = 1.8;
  const double v = rng.uniform(2.6, 3.4);
  const double lane_y = -2.5 + rng.uniform(-0.25, 0.25);
  const double x_at_branch = -2.5 + rng.uniform(-0.5, 0.5);
  car.initial_pose = {x_at_branch - v * branch_time, lane_y, 0.0};
  if (branch == 0) {
    car.model = TrajectoryModel::kConstantVelocity;
    car.segments = {{1e9, v, 0.0}};
  } else {
    const double radius = 4.5;
    const double yaw_rate = v / radius;
    car.model = TrajectoryModel::kConstantTurnRate;
    car.segments = {{branch_time, v, 0.0}, {0.5 * kPi / yaw_rate, v, yaw_rate}, {1e9, v, 0.0}};
  }
  script.agents.push_back(std::move(car));
  validate(script);
  return script;
}

/// Output of render_frame.
struct RenderedFrame {
  OccupancyStateGrid states;
  VelocityGrid velocity;
  VehicleMaskGrid vehicles;
};

/// Objects of a scene at one instant.
struct SceneSnapshot {
  struct Object {
    Polygon shape;
    int agent = -1;  // index into SceneScript::agents, -1 for static structures
    AgentKind kind = AgentKind::kVehicle;
    bool dynamic = false;
    Vec2 velocity;  // world frame, m/s
    Vec2 centroid;
  };
  std::vector<Object> objects;
  Pose2 ego_pose;
  Polygon ego_shape;
};

inline SceneSnapshot snapshot(const SceneScript& script, double t) {
  SceneSnapshot s;
  for (const Polygon& p : script.static_shapes) s.objects.push_back({p, -1, AgentKind::kVehicle, false, {}, {}});
  for (std::size_t i = 0; i < script.agents.size(); ++i) {
    const AgentSpec& a = script.agents[i];
    const Pose2 pose = a.pose_at(t);
    s.objects.push_back({make_rectangle(pose, a.length, a.width), static_cast<int>(i), a.kind, a.dynamic_at(t),
                         a.velocity_at(t), pose.translation()});
  }
  s.ego_pose = script.ego.pose_at(t);
  s.ego_shape = script.ego.footprint_at(t);
  return s;
}

namespace detail {

inline void require_time(const SceneScript& script, double t, const char* what) {
  constexpr double kSlack = 1e-9;
  if (!(t >= -kSlack && t <= script.duration + kSlack)) {
    throw GridError(std::string(what) + ": time " + std::to_string(t) + " outside [0, " +
                    std::to_string(script.duration) + "]");
  }
}

/// Index of the first object whose shape contains `p`, or -1.
inline int object_at(const SceneSnapshot& snap, Vec2 p) {
  for (std::size_t k = 0; k < snap.objects.size(); ++k) {
    if (point_in_polygon(snap.objects[k].shape, p)) return static_cast<int>(k);
  }
  return -1;
}

/// Per-ray entry distances of every object, used for occlusion tests.
class RayTable {
 public:
  RayTable(const SceneSnapshot& snap, int ray_count)
      : rays_(ray_count), objects_(snap.objects.size()), origin_(snap.ego_pose.translation()),
        entry_(static_cast<std::size_t>(ray_count) * snap.objects.size(), kNone) {
    for (std::size_t k = 0; k < objects_; ++k) {
      // Objects enclosing the sensor never occlude.
      if (point_in_polygon(snap.objects[k].shape, origin_)) continue;
      for (int i = 0; i < rays_; ++i) {
        const double a = 2.0 * kPi * i / rays_;
        if (auto s = ray_polygon_entry(origin_, {std::cos(a), std::sin(a)}, snap.objects[k].shape)) {
          entry_[static_cast<std::size_t>(i) * objects_ + k] = *s;
        }
      }
    }
  }

  /// True when no object other than `own` is entered before reaching `p`.
  [[nodiscard]] bool visible(Vec2 p, int own) const {
    const Vec2 d = p - origin_;
    const double dist = d.norm();
    double a = std::atan2(d.y, d.x);
    if (a < 0.0) a += 2.0 * kPi;
    const int ray = static_cast<int>(std::lround(a / (2.0 * kPi) * rays_)) % rays_;
    const double* row = &entry_[static_cast<std::size_t>(ray) * objects_];
    for (std::size_t k = 0; k < objects_; ++k) {
      if (static_cast<int>(k) == own) continue;
      if (row[k] < dist) return false;
    }
    return true;
  }

 private:
  static constexpr double kNone = 1e300;
  int rays_;
  std::size_t objects_;
  Vec2 origin_;
  std::vector<double> entry_;
};

inline std::uint64_t frame_noise_seed(const SceneScript& script, double t) {
  const auto t_key = static_cast<std::uint64_t>(std::llround(t * 1e6));
  return splitmix64(script.seed ^ splitmix64(t_key ^ 0x5EC7E5ull));
}

}  // namespace detail

/// Geometry of an ego-centric grid at time t: centered on the ego, ego
/// heading pointing to row 0.
inline GridGeometry ego_centric_geometry(const SceneScript& script, double t, const GridGeometry& base) {
  GridGeometry g = base;
  const Pose2 ego = script.ego.pose_at(t);
  g.origin_pose = {ego.x, ego.y, wrap_angle(ego.heading - 0.5 * kPi)};
  return g;
}

/// Renders the sensor view of the scene at time t into `geometry`.
///
/// Cells whose centers lie inside a static structure or an agent are
/// occupied (dynamic when the agent moves faster than the static
/// threshold). Cells hidden behind another object along the sensor ray, or
/// beyond max_range, are unknown. The ego is never rendered.
inline RenderedFrame render_frame(const SceneScript& script, double t, const SensorModel& sensor,
                                  const GridGeometry& geometry) {
  detail::require_time(script, t, "render_frame");
  validate(sensor);
  validate(geometry);
  const SceneSnapshot snap = snapshot(script, t);
  const detail::RayTable rays(snap, sensor.ray_count);
  const Vec2 origin = snap.ego_pose.translation();
  const double to_grid = -geometry.origin_pose.heading;

  RenderedFrame out{OccupancyStateGrid(geometry), VelocityGrid(geometry), VehicleMaskGrid(geometry)};
  std::mt19937_64 noise(detail::frame_noise_seed(script, t));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const bool noisy = sensor.state_noise > 0.0 || sensor.dropout_rate > 0.0 || sensor.velocity_noise > 0.0;

  for (int r = 0; r < geometry.height; ++r) {
    for (int c = 0; c < geometry.width; ++c) {
      const Vec2 p = geometry.cell_to_world(r, c);
      double unk = 0.0, stat = 0.0, dyn = 0.0, veh = 0.0;
      Vec2 vel;
      const bool is_ego = point_in_polygon(snap.ego_shape, p);
      const int own = is_ego ? -1 : detail::object_at(snap, p);
      bool seen = (p - origin).norm() <= sensor.max_range && rays.visible(p, own);

      // Draw a fixed number of variates per cell so noise does not depend
      // on scene content.
      double u_drop = 1.0;
      std::array<double, 6> n{};
      if (noisy) {
        u_drop = unit(noise);
        for (double& x : n) x = gauss(noise);
      }

      if (!seen) {
        unk = 1.0;
      } else if (own >= 0) {
        const auto& obj = snap.objects[own];
        if (u_drop < sensor.dropout_rate) {
          unk = 1.0;
        } else {
          (obj.dynamic ? dyn : stat) = 1.0;
          if (obj.agent >= 0 && obj.kind == AgentKind::kVehicle) veh = 1.0;
          if (obj.dynamic) vel = rotate(obj.velocity, to_grid);
        }
      }

      if (sensor.state_noise > 0.0) {
        unk = std::clamp(unk + sensor.state_noise * n[0], 0.0, 1.0);
        stat = std::clamp(stat + sensor.state_noise * n[1], 0.0, 1.0);
        dyn = std::clamp(dyn + sensor.state_noise * n[2], 0.0, 1.0);
        veh = std::clamp(veh + sensor.state_noise * n[3], 0.0, 1.0);
        const double sum = unk + stat + dyn;
        if (sum > 1.0) {
          unk /= sum;
          stat /= sum;
          dyn /= sum;
        }
      }
      if (vel.x != 0.0 || vel.y != 0.0) {
        vel.x += sensor.velocity_noise * n[4];
        vel.y += sensor.velocity_noise * n[5];
      }
      if (dyn <= 0.0) vel = {};

      out.states.unk(r, c) = static_cast<float>(unk);
      out.states.stat(r, c) = static_cast<float>(stat);
      out.states.dyn(r, c) = static_cast<float>(dyn);
      out.velocity.vx(r, c) = static_cast<float>(vel.x);
      out.velocity.vy(r, c) = static_cast<float>(vel.y);
      out.vehicles.prob(r, c) = static_cast<float>(veh);
    }
  }
  return out;
}

/// Exact vehicle footprints (static and moving, ego excluded), no
/// visibility or noise.
inline VehicleMaskGrid vehicle_mask(const SceneScript& script, double t, const GridGeometry& geometry) {
  detail::require_time(script, t, "vehicle_mask");
  const SceneSnapshot snap = snapshot(script, t);
  VehicleMaskGrid m(geometry);
  for (int r = 0; r < geometry.height; ++r) {
    for (int c = 0; c < geometry.width; ++c) {
      const Vec2 p = geometry.cell_to_world(r, c);
      if (point_in_polygon(snap.ego_shape, p)) continue;
      const int k = detail::object_at(snap, p);
      if (k >= 0 && snap.objects[k].agent >= 0 && snap.objects[k].kind == AgentKind::kVehicle) m.prob(r, c) = 1.0f;
    }
  }
  return m;
}

/// Exact binary masks of dynamic agents per class (vehicle, pedestrian,
/// cyclist).
inline std::array<Plane, kAgentClasses> dynamic_agent_masks(const SceneScript& script, double t,
                                                            const GridGeometry& geometry) {
  detail::require_time(script, t, "dynamic_agent_masks");
  const SceneSnapshot snap = snapshot(script, t);
  std::array<Plane, kAgentClasses> masks;
  for (Plane& m : masks) m = Plane(geometry.height, geometry.width);
  for (int r = 0; r < geometry.height; ++r) {
    for (int c = 0; c < geometry.width; ++c) {
      const Vec2 p = geometry.cell_to_world(r, c);
      if (point_in_polygon(snap.ego_shape, p)) continue;
      const int k = detail::object_at(snap, p);
      if (k >= 0 && snap.objects[k].agent >= 0 && snap.objects[k].dynamic) {
        masks[static_cast<int>(snap.objects[k].kind)](r, c) = 1.0f;
      }
    }
  }
  return masks;
}

/// Backward centroid flow: every cell covered by agent `a` at time t holds
/// `centroid(a, t - step) - centroid(a, t)` in grid-frame cells.
inline SceneFlowGrid ground_truth_flow(const SceneScript& script, double t, double step,
                                       const GridGeometry& geometry) {
  detail::require_time(script, t, "ground_truth_flow");
  detail::require_time(script, t - step, "ground_truth_flow");
  validate(geometry);
  const SceneSnapshot now = snapshot(script, t);
  const double to_grid = -geometry.origin_pose.heading;
  std::vector<Vec2> back(script.agents.size());
  for (std::size_t i = 0; i < script.agents.size(); ++i) {
    const Vec2 d = script.agents[i].pose_at(t - step).translation() - script.agents[i].pose_at(t).translation();
    back[i] = (1.0 / geometry.resolution) * rotate(d, to_grid);
  }
  SceneFlowGrid f(geometry);
  for (int r = 0; r < geometry.height; ++r) {
    for (int c = 0; c < geometry.width; ++c) {
      const Vec2 p = geometry.cell_to_world(r, c);
      if (point_in_polygon(now.ego_shape, p)) continue;
      const int k = detail::object_at(now, p);
      if (k < 0 || now.objects[k].agent < 0) continue;
      const Vec2 v = back[now.objects[k].agent];
      f.fx(r, c) = static_cast<float>(v.x);
      f.fy(r, c) = static_cast<float>(v.y);
    }
  }
  return f;
}

/// Builds one training/evaluation window ending at time t: N+1 noisy
/// history frames and T noiseless future targets, all expressed in the
/// ego-centric frame at t.
inline SequenceSample build_sample(const SceneScript& script, double t, int history, int horizon, double step,
                                   const SensorModel& sensor, const GridGeometry& base) {
  if (history < 0 || horizon < 1) throw GridError("build_sample: need N >= 0 and T >= 1");
  if (!(step > 0.0)) throw GridError("build_sample: step must be positive");
  constexpr double kSlack = 1e-9;
  if (t - history * step < -kSlack || t + horizon * step > script.duration + kSlack) {
    throw GridError("build_sample: window [" + std::to_string(t - history * step) + ", " +
                    std::to_string(t + horizon * step) + "] outside scene duration " +
                    std::to_string(script.duration));
  }
  const GridGeometry ref = ego_centric_geometry(script, t, base);
  const SensorModel clean = SensorModel::noiseless(sensor.max_range, sensor.ray_count);

  SequenceSample s;
  s.time = t;
  s.reference_pose = script.ego.pose_at(t);
  for (int k = history; k >= 0; --k) {
    const double tk = t - k * step;
    RenderedFrame f = render_frame(script, tk, sensor, ref);
    s.history.push_back(compose_input_frame(f.states, f.velocity, f.vehicles, tk));
  }
  s.det_veh = vehicle_mask(script, t, ref);
  const RenderedFrame now = render_frame(script, t, clean, ref);
  s.det_dyn = Plane(ref.height, ref.width);
  for (std::size_t i = 0; i < s.det_dyn.size(); ++i) s.det_dyn[i] = now.states.dyn[i] > 0.5f ? 1.0f : 0.0f;
  s.det_dynamic_by_class = dynamic_agent_masks(script, t, ref);

  for (int tau = 1; tau <= horizon; ++tau) {
    const double tt = t + tau * step;
    FutureTarget target;
    target.veh = vehicle_mask(script, tt, ref);
    target.flow = ground_truth_flow(script, tt, step, ref);
    target.ogm = render_frame(script, tt, clean, ref).states;
    target.dynamic_by_class = dynamic_agent_masks(script, tt, ref);
    s.future.push_back(std::move(target));
  }
  return s;
}

// JSON serialization ---------------------------------------------------------

NLOHMANN_JSON_SERIALIZE_ENUM(AgentKind, {{AgentKind::kVehicle, "vehicle"},
                                         {AgentKind::kPedestrian, "pedestrian"},
                                         {AgentKind::kCyclist, "cyclist"}})
NLOHMANN_JSON_SERIALIZE_ENUM(TrajectoryModel, {{TrajectoryModel::kConstantVelocity, "constant_velocity"},
                                               {TrajectoryModel::kConstantTurnRate, "constant_turn_rate"},
                                               {TrajectoryModel::kStopAndGo, "stop_and_go"}})

inline void to_json(nlohmann::json& j, const Vec2& v) { j = nlohmann::json::array({v.x, v.y}); }
inline void from_json(const nlohmann::json& j, Vec2& v) {
  v.x = j.at(0).get<double>();
  v.y = j.at(1).get<double>();
}
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Pose2, x, y, heading)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MotionSegment, duration, speed, yaw_rate)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AgentSpec, kind, length, width, model, initial_pose, segments)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SceneScript, static_shapes, agents, ego, duration, seed)
inline void to_json(nlohmann::json& j, const SensorModel& v) {
  GRIDCAST_JSON_PUT(max_range);
  GRIDCAST_JSON_PUT(ray_count);
  GRIDCAST_JSON_PUT(state_noise);
  GRIDCAST_JSON_PUT(dropout_rate);
  GRIDCAST_JSON_PUT(velocity_noise);
}
inline void from_json(const nlohmann::json& j, SensorModel& v) {
  GRIDCAST_JSON_FIELD(max_range);
  GRIDCAST_JSON_FIELD(ray_count);
  GRIDCAST_JSON_FIELD(state_noise);
  GRIDCAST_JSON_FIELD(dropout_rate);
  GRIDCAST_JSON_FIELD(velocity_noise);
}

inline void to_json(nlohmann::json& j, const WorldConfig& v) {
  GRIDCAST_JSON_PUT(vehicles);
  GRIDCAST_JSON_PUT(pedestrians);
  GRIDCAST_JSON_PUT(cyclists);
  GRIDCAST_JSON_PUT(static_shapes);
  GRIDCAST_JSON_PUT(duration);
  GRIDCAST_JSON_PUT(parked_fraction);
  GRIDCAST_JSON_PUT(turn_probability);
  GRIDCAST_JSON_PUT(stop_and_go_probability);
  GRIDCAST_JSON_PUT(vehicle_speed);
  GRIDCAST_JSON_PUT(pedestrian_speed);
  GRIDCAST_JSON_PUT(cyclist_speed);
  GRIDCAST_JSON_PUT(ego_speed);
  GRIDCAST_JSON_PUT(road_half_width);
  GRIDCAST_JSON_PUT(spawn_margin);
  GRIDCAST_JSON_PUT(max_retries);
}
inline void from_json(const nlohmann::json& j, WorldConfig& v) {
  GRIDCAST_JSON_FIELD(vehicles);
  GRIDCAST_JSON_FIELD(pedestrians);
  GRIDCAST_JSON_FIELD(cyclists);
  GRIDCAST_JSON_FIELD(static_shapes);
  GRIDCAST_JSON_FIELD(duration);
  GRIDCAST_JSON_FIELD(parked_fraction);
  GRIDCAST_JSON_FIELD(turn_probability);
  GRIDCAST_JSON_FIELD(stop_and_go_probability);
  GRIDCAST_JSON_FIELD(vehicle_speed);
  GRIDCAST_JSON_FIELD(pedestrian_speed);
  GRIDCAST_JSON_FIELD(cyclist_speed);
  GRIDCAST_JSON_FIELD(ego_speed);
  GRIDCAST_JSON_FIELD(road_half_width);
  GRIDCAST_JSON_FIELD(spawn_margin);
  GRIDCAST_JSON_FIELD(max_retries);
}

}  // namespace gridcast

#endif  // GRIDCAST_SYNTH_WORLD_HPP
