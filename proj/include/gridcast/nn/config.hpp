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

#ifndef GRIDCAST_NN_CONFIG_HPP
#define GRIDCAST_NN_CONFIG_HPP

/// Run configuration: world, grid, window, backbone, loss, optimizer,
/// switches and paths. A config plus a seed fully determines a run.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gridcast/losses.hpp"
#include "gridcast/nn/objective.hpp"
#include "gridcast/nn/predictor.hpp"
#include "gridcast/synth_world.hpp"

namespace gridcast::nn {

/// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridConfig {
  int height = 64;
  int width = 64;
  double resolution = 0.5;  // m per cell

  [[nodiscard]] GridGeometry geometry() const { return {width, height, resolution, {}}; }
  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct DatasetConfig {
  int train_scenes = 80;
  int val_scenes = 20;
  double window_stride = 1.0;  // s between consecutive sample times in a scene
};

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double weight_decay = 3e-7;
  int epochs = 20;
  int batch_size = 8;
};

struct RunConfig {
  std::string preset = "desk";
  WorldConfig world;
  SensorModel sensor;
  GridConfig grid;
  int history = 2;      // N
  int horizon = 5;      // T
  double step = 0.5;    // s between frames
  BackboneConfig backbone;
  LossWeights loss;
  OptimizerConfig optimizer;
  TaskSwitches tasks;
  DatasetConfig dataset;
  std::uint64_t seed = 0;
  std::string data_dir = "data";
  std::string output_dir = "runs/default";
  int log_every = 10;  // steps between progress lines on stderr

  /// Desk scale: 64x64 cells of 0.5 m, hidden width 32, depth 2.
  static RunConfig desk() { return {}; }
  /// Full scale: 240x240 cells of 0.25 m (60 m crop), hidden width 128,
  /// depth 4, learning rate 3e-4, batch 18.
  static RunConfig full() {
    RunConfig c;
    c.preset = "full";
    c.grid = {240, 240, 0.25};
    c.backbone = BackboneConfig::full();
    c.optimizer = {3e-4, 3e-7, 20, 18};
    return c;
  }
};

inline void to_json(nlohmann::json& j, const GridConfig& v) {
  GRIDCAST_JSON_PUT(height);
  GRIDCAST_JSON_PUT(width);
  GRIDCAST_JSON_PUT(resolution);
}
inline void from_json(const nlohmann::json& j, GridConfig& v) {
  GRIDCAST_JSON_FIELD(height);
  GRIDCAST_JSON_FIELD(width);
  GRIDCAST_JSON_FIELD(resolution);
}
inline void to_json(nlohmann::json& j, const DatasetConfig& v) {
  GRIDCAST_JSON_PUT(train_scenes);
  GRIDCAST_JSON_PUT(val_scenes);
  GRIDCAST_JSON_PUT(window_stride);
}
inline void from_json(const nlohmann::json& j, DatasetConfig& v) {
  GRIDCAST_JSON_FIELD(train_scenes);
  GRIDCAST_JSON_FIELD(val_scenes);
  GRIDCAST_JSON_FIELD(window_stride);
}
inline void to_json(nlohmann::json& j, const OptimizerConfig& v) {
  GRIDCAST_JSON_PUT(learning_rate);
  GRIDCAST_JSON_PUT(weight_decay);
  GRIDCAST_JSON_PUT(epochs);
  GRIDCAST_JSON_PUT(batch_size);
}
inline void from_json(const nlohmann::json& j, OptimizerConfig& v) {
  GRIDCAST_JSON_FIELD(learning_rate);
  GRIDCAST_JSON_FIELD(weight_decay);
  GRIDCAST_JSON_FIELD(epochs);
  GRIDCAST_JSON_FIELD(batch_size);
}

inline void to_json(nlohmann::json& j, const RunConfig& v) {
  GRIDCAST_JSON_PUT(preset);
  GRIDCAST_JSON_PUT(world);
  GRIDCAST_JSON_PUT(sensor);
  GRIDCAST_JSON_PUT(grid);
  GRIDCAST_JSON_PUT(history);
  GRIDCAST_JSON_PUT(horizon);
  GRIDCAST_JSON_PUT(step);
  GRIDCAST_JSON_PUT(backbone);
  GRIDCAST_JSON_PUT(loss);
  GRIDCAST_JSON_PUT(optimizer);
  GRIDCAST_JSON_PUT(tasks);
  GRIDCAST_JSON_PUT(dataset);
  GRIDCAST_JSON_PUT(seed);
  GRIDCAST_JSON_PUT(data_dir);
  GRIDCAST_JSON_PUT(output_dir);
  GRIDCAST_JSON_PUT(log_every);
}

inline void validate(const RunConfig& c) {
  try {
    validate(c.world);
    validate(c.sensor);
    validate(c.grid.geometry());
    validate(c.backbone);
    validate(c.loss);
    validate(c.tasks);
  } catch (const GridError& e) {
    throw ConfigError(e.what());
  }
  if (c.grid.height % 4 != 0 || c.grid.width % 4 != 0)
    throw ConfigError("grid: height and width must be divisible by 4 (encoder stride)");
  if (c.history < 0 || c.horizon < 1) throw ConfigError("window: need history >= 0 and horizon >= 1");
  if (!(c.step > 0.0)) throw ConfigError("window: step must be positive");
  if (c.backbone.history != c.history || c.backbone.horizon != c.horizon)
    throw ConfigError("backbone history/horizon must match the run window");
  if (c.dataset.train_scenes < 1 || c.dataset.val_scenes < 0)
    throw ConfigError("dataset: need train_scenes >= 1 and val_scenes >= 0");
  if (!(c.dataset.window_stride > 0.0)) throw ConfigError("dataset: window_stride must be positive");
  if (c.world.duration + 1e-9 < (c.history + c.horizon) * c.step)
    throw ConfigError("dataset: scene duration shorter than one sample window");
  const auto& o = c.optimizer;
  if (!(o.learning_rate > 0.0) || o.weight_decay < 0.0 || o.epochs < 0 || o.batch_size < 1)
    throw ConfigError("optimizer: need learning_rate > 0, weight_decay >= 0, epochs >= 0, batch_size >= 1");
  if (c.log_every < 1) throw ConfigError("log_every must be >= 1");
}

/// Reads a config: the `preset` key ("desk" or "full") selects the base,
/// `loss_preset` ("standard" or "occlusion_heavy") the loss weights, and
/// every other present key overrides the base. Unknown keys are rejected.
inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> kKnown = {
      "preset", "loss_preset", "world",    "sensor", "grid", "history",  "horizon",    "step",
      "backbone", "loss",      "optimizer", "tasks", "dataset", "seed", "data_dir", "output_dir", "log_every"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end())
      throw ConfigError("unknown config key: " + key);
  }
  const std::string preset = j.value("preset", std::string("desk"));
  RunConfig v;
  if (preset == "desk") {
    v = RunConfig::desk();
  } else if (preset == "full") {
    v = RunConfig::full();
  } else {
    throw ConfigError("unknown preset: " + preset + " (expected desk or full)");
  }
  const std::string loss_preset = j.value("loss_preset", std::string("standard"));
  if (loss_preset == "standard") {
    v.loss = LossWeights::standard();
  } else if (loss_preset == "occlusion_heavy") {
    v.loss = LossWeights::occlusion_heavy();
  } else {
    throw ConfigError("unknown loss_preset: " + loss_preset + " (expected standard or occlusion_heavy)");
  }
  try {
    GRIDCAST_JSON_FIELD(world);
    GRIDCAST_JSON_FIELD(sensor);
    GRIDCAST_JSON_FIELD(grid);
    GRIDCAST_JSON_FIELD(history);
    GRIDCAST_JSON_FIELD(horizon);
    GRIDCAST_JSON_FIELD(step);
    GRIDCAST_JSON_FIELD(backbone);
    GRIDCAST_JSON_FIELD(loss);
    GRIDCAST_JSON_FIELD(optimizer);
    GRIDCAST_JSON_FIELD(tasks);
    GRIDCAST_JSON_FIELD(dataset);
    GRIDCAST_JSON_FIELD(seed);
    GRIDCAST_JSON_FIELD(data_dir);
    GRIDCAST_JSON_FIELD(output_dir);
    GRIDCAST_JSON_FIELD(log_every);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  // The backbone window follows the run window unless set explicitly.
  if (!j.contains("backbone") || !j["backbone"].contains("history")) v.backbone.history = v.history;
  if (!j.contains("backbone") || !j["backbone"].contains("horizon")) v.backbone.horizon = v.horizon;
  validate(v);
  return v;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

/// Seed mixing for derived random streams (data order, latent noise).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return gridcast::detail::splitmix64(a ^ gridcast::detail::splitmix64(b + 0x9e3779b97f4a7c15ULL));
}

}  // namespace gridcast::nn

#endif  // GRIDCAST_NN_CONFIG_HPP
