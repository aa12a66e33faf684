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

#ifndef GRIDCAST_GRID_HPP
#define GRIDCAST_GRID_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

/// \file
/// Grid data types shared by every gridcast module.
///
/// Conventions, used everywhere in the library:
///  - Storage is row-major, row 0 is the top of the grid.
///  - The grid frame is right-handed with its origin at the grid center:
///    +x points along increasing column, +y points toward row 0 ("up").
///    An ego-centric grid places the ego at the center facing up, so the
///    grid frame heading is `ego_heading - pi/2`.
///  - Velocities are m/s in the grid frame. Scene flow is cells per
///    prediction step in the grid frame, backward convention: the vector at
///    a target cell points to where its occupancy was one step earlier.

namespace gridcast {

/// Raised when arguments violate a documented precondition.
class GridError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;

  [[nodiscard]] double norm() const { return std::hypot(x, y); }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// SE(2) pose: translation in meters, heading in radians.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  friend bool operator==(const Pose2&, const Pose2&) = default;

  [[nodiscard]] Vec2 translation() const { return {x, y}; }
  [[nodiscard]] bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(heading);
  }
  /// Maps a point expressed in this frame to the parent frame.
  [[nodiscard]] Vec2 apply(Vec2 local) const { return rotate(local, heading) + translation(); }
  /// Maps a parent-frame point into this frame.
  [[nodiscard]] Vec2 inverse_apply(Vec2 world) const { return rotate(world - translation(), -heading); }
};

struct GridGeometry {
  int width = 1;
  int height = 1;
  double resolution = 1.0;  // meters per cell
  Pose2 origin_pose;        // pose of the grid-center frame in world coordinates

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;

  [[nodiscard]] std::size_t cell_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  [[nodiscard]] double extent_x() const { return width * resolution; }
  [[nodiscard]] double extent_y() const { return height * resolution; }

  /// Grid-frame metric position of a (possibly fractional) cell index.
  [[nodiscard]] Vec2 cell_to_local(double row, double col) const {
    return {(col + 0.5 - 0.5 * width) * resolution, (0.5 * height - row - 0.5) * resolution};
  }
  /// Inverse of cell_to_local; returns {row, col} as continuous indices.
  [[nodiscard]] std::pair<double, double> local_to_cell(Vec2 p) const {
    return {0.5 * height - 0.5 - p.y / resolution, p.x / resolution + 0.5 * width - 0.5};
  }
  [[nodiscard]] Vec2 cell_to_world(double row, double col) const {
    return origin_pose.apply(cell_to_local(row, col));
  }
  [[nodiscard]] std::pair<double, double> world_to_cell(Vec2 w) const {
    return local_to_cell(origin_pose.inverse_apply(w));
  }
  [[nodiscard]] bool contains(int row, int col) const {
    return row >= 0 && row < height && col >= 0 && col < width;
  }
};

inline void validate(const GridGeometry& g) {
  if (g.width < 1 || g.height < 1) throw GridError("grid geometry: width and height must be >= 1");
  if (!(g.resolution > 0.0) || !std::isfinite(g.resolution))
    throw GridError("grid geometry: resolution must be positive");
  if (!g.origin_pose.finite()) throw GridError("grid geometry: non-finite origin pose");
}

inline std::string describe(const GridGeometry& g) {
  std::ostringstream os;
  os << g.width << "x" << g.height << "@" << g.resolution << "m pose(" << g.origin_pose.x << ","
     << g.origin_pose.y << "," << g.origin_pose.heading << ")";
  return os.str();
}

inline void require_same_geometry(const GridGeometry& a, const GridGeometry& b, const char* what) {
  if (!(a == b)) {
    throw GridError(std::string(what) + ": geometry mismatch (" + describe(a) + " vs " + describe(b) + ")");
  }
}

/// Dense row-major h x w array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width), data_(checked_size(height, width), fill) {}

  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] std::span<T> values() { return data_; }
  [[nodiscard]] std::span<const T> values() const { return data_; }
  [[nodiscard]] T* data() { return data_.data(); }
  [[nodiscard]] const T* data() const { return data_.data(); }

  [[nodiscard]] bool same_shape(const Grid& o) const { return height_ == o.height_ && width_ == o.width_; }
  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static std::size_t checked_size(int h, int w) {
    if (h < 1 || w < 1) throw GridError("grid dimensions must be >= 1");
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  [[nodiscard]] std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Plane = Grid<float>;

inline constexpr double kStateSumTolerance = 1e-6;

/// Per-cell probabilities of the unknown, static and dynamic states; the
/// free probability is implicit (1 - sum, clamped at 0).
struct OccupancyStateGrid {
  Plane unk;
  Plane stat;
  Plane dyn;
  GridGeometry geometry;

  OccupancyStateGrid() = default;
  explicit OccupancyStateGrid(const GridGeometry& g)
      : unk(g.height, g.width), stat(g.height, g.width), dyn(g.height, g.width), geometry(g) {}

  [[nodiscard]] float free(int r, int c) const {
    return std::max(0.0f, 1.0f - unk(r, c) - stat(r, c) - dyn(r, c));
  }
};

struct VelocityGrid {
  Plane vx;
  Plane vy;
  GridGeometry geometry;

  VelocityGrid() = default;
  explicit VelocityGrid(const GridGeometry& g) : vx(g.height, g.width), vy(g.height, g.width), geometry(g) {}
};

struct VehicleMaskGrid {
  Plane prob;
  GridGeometry geometry;

  VehicleMaskGrid() = default;
  explicit VehicleMaskGrid(const GridGeometry& g) : prob(g.height, g.width), geometry(g) {}
};

struct SceneFlowGrid {
  Plane fx;
  Plane fy;
  GridGeometry geometry;

  SceneFlowGrid() = default;
  explicit SceneFlowGrid(const GridGeometry& g) : fx(g.height, g.width), fy(g.height, g.width), geometry(g) {}
};

/// Scalar grid with geometry; used for binary masks and single warped grids.
struct ScalarGrid {
  Plane values;
  GridGeometry geometry;

  ScalarGrid() = default;
  explicit ScalarGrid(const GridGeometry& g, float fill = 0.0f) : values(g.height, g.width, fill), geometry(g) {}
};

/// Channel layout of a model input frame.
enum class FrameChannel : int { kUnknown = 0, kStatic = 1, kDynamic = 2, kVelX = 3, kVelY = 4, kVehicle = 5 };
inline constexpr int kFrameChannels = 6;
inline constexpr std::array<const char*, kFrameChannels> kFrameChannelNames = {"unk", "stat", "dyn",
                                                                                "vx",  "vy",   "veh"};

/// One 6-channel model input frame (unk, stat, dyn, vx, vy, veh).
struct FrameTensor {
  std::array<Plane, kFrameChannels> channels;
  GridGeometry geometry;
  double timestamp = 0.0;

  Plane& operator[](FrameChannel c) { return channels[static_cast<int>(c)]; }
  const Plane& operator[](FrameChannel c) const { return channels[static_cast<int>(c)]; }
};

enum class AgentClass : int { kVehicle = 0, kPedestrian = 1, kCyclist = 2 };
inline constexpr int kAgentClasses = 3;

/// Ground truth for one future step.
struct FutureTarget {
  VehicleMaskGrid veh;
  SceneFlowGrid flow;
  OccupancyStateGrid ogm;
  /// Binary masks of dynamic agents per class (vehicle, pedestrian, cyclist).
  std::array<Plane, kAgentClasses> dynamic_by_class;
};

struct SequenceSample {
  std::vector<FrameTensor> history;  // N+1 frames, oldest first
  VehicleMaskGrid det_veh;
  Plane det_dyn;  // binary
  std::array<Plane, kAgentClasses> det_dynamic_by_class;
  std::vector<FutureTarget> future;  // T entries
  Pose2 reference_pose;
  double time = 0.0;

  [[nodiscard]] int history_length() const { return static_cast<int>(history.size()) - 1; }
  [[nodiscard]] int horizon() const { return static_cast<int>(future.size()); }
  [[nodiscard]] const GridGeometry& geometry() const { return det_veh.geometry; }
};

/// Network output for one sample: detection grids at t, per-step vehicle
/// and flow predictions, per-step occupancy states.
struct PredictionBundle {
  struct Step {
    Plane veh;
    SceneFlowGrid flow;
  };
  Plane det_veh;
  Plane det_dyn;
  std::vector<Step> pred;
  std::vector<OccupancyStateGrid> ogm;

  [[nodiscard]] int horizon() const { return static_cast<int>(pred.size()); }
};

inline void validate(const OccupancyStateGrid& o) {
  validate(o.geometry);
  for (std::size_t i = 0; i < o.unk.size(); ++i) {
    const float u = o.unk[i], s = o.stat[i], d = o.dyn[i];
    if (!(u >= 0.f && u <= 1.f && s >= 0.f && s <= 1.f && d >= 0.f && d <= 1.f))
      throw GridError("occupancy state grid: probability outside [0,1]");
    if (static_cast<double>(u) + s + d > 1.0 + kStateSumTolerance)
      throw GridError("occupancy state grid: state probabilities sum above 1");
  }
}

/// Stacks state, velocity and vehicle grids into a model input frame.
inline FrameTensor compose_input_frame(const OccupancyStateGrid& o, const VelocityGrid& v, const VehicleMaskGrid& s,
                                       double timestamp = 0.0) {
  require_same_geometry(o.geometry, v.geometry, "compose_input_frame(state, velocity)");
  require_same_geometry(o.geometry, s.geometry, "compose_input_frame(state, vehicle)");
  FrameTensor f;
  f.geometry = o.geometry;
  f.timestamp = timestamp;
  f.channels = {o.unk, o.stat, o.dyn, v.vx, v.vy, s.prob};
  return f;
}

inline OccupancyStateGrid frame_states(const FrameTensor& f) {
  OccupancyStateGrid o;
  o.geometry = f.geometry;
  o.unk = f[FrameChannel::kUnknown];
  o.stat = f[FrameChannel::kStatic];
  o.dyn = f[FrameChannel::kDynamic];
  return o;
}

inline VelocityGrid frame_velocity(const FrameTensor& f) {
  VelocityGrid v;
  v.geometry = f.geometry;
  v.vx = f[FrameChannel::kVelX];
  v.vy = f[FrameChannel::kVelY];
  return v;
}

inline VehicleMaskGrid frame_vehicles(const FrameTensor& f) {
  VehicleMaskGrid s;
  s.geometry = f.geometry;
  s.prob = f[FrameChannel::kVehicle];
  return s;
}

}  // namespace gridcast

#endif  // GRIDCAST_GRID_HPP
