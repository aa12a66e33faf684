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

#ifndef GRIDCAST_NN_DATASET_HPP
#define GRIDCAST_NN_DATASET_HPP

/// Synthetic dataset on disk. Layout:
///   dataset.json             window, grid, world, sensor, splits
///   scenes/scene_<seed>.json SceneScript of every scene
///   <split>/<seed>_<ms>/     one grid container per sample (one frame
///                            holding every channel of the sample)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "gridcast/container.hpp"
#include "gridcast/nn/config.hpp"
#include "gridcast/nn/tensors.hpp"

namespace gridcast::nn {

inline constexpr const char* kDatasetFormat = "gridcast-dataset";
inline constexpr int kDatasetVersion = 1;

struct SampleRef {
  std::string dir;  // relative to the dataset root
  std::uint64_t scene_seed = 0;
  double time = 0.0;
};

struct DatasetIndex {
  std::filesystem::path root;
  nlohmann::json meta;
  std::vector<SampleRef> train;
  std::vector<SampleRef> val;

  [[nodiscard]] const std::vector<SampleRef>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    throw ConfigError("unknown split: " + name + " (expected train or val)");
  }
};

/// Channel names of a sample container, in storage order.
inline std::vector<std::string> sample_channels(int history, int horizon) {
  static const char* kClass[] = {"veh", "ped", "cyc"};
  std::vector<std::string> c;
  for (int k = 0; k <= history; ++k) {
    for (const char* n : kFrameChannelNames) c.push_back("h" + std::to_string(k) + "." + n);
  }
  c.push_back("det.veh");
  c.push_back("det.dyn");
  for (const char* n : kClass) c.push_back(std::string("det.dyn_") + n);
  for (int k = 1; k <= horizon; ++k) {
    const std::string p = "f" + std::to_string(k) + ".";
    for (const char* n : {"veh", "fx", "fy", "unk", "stat", "dyn"}) c.push_back(p + n);
    for (const char* n : kClass) c.push_back(p + "dyn_" + n);
  }
  return c;
}

inline void write_sample(const std::filesystem::path& dir, const SequenceSample& s, double step) {
  std::vector<Plane> planes;
  for (const FrameTensor& f : s.history) planes.insert(planes.end(), f.channels.begin(), f.channels.end());
  planes.push_back(s.det_veh.prob);
  planes.push_back(s.det_dyn);
  planes.insert(planes.end(), s.det_dynamic_by_class.begin(), s.det_dynamic_by_class.end());
  for (const FutureTarget& f : s.future) {
    for (const Plane* p : {&f.veh.prob, &f.flow.fx, &f.flow.fy, &f.ogm.unk, &f.ogm.stat, &f.ogm.dyn})
      planes.push_back(*p);
    planes.insert(planes.end(), f.dynamic_by_class.begin(), f.dynamic_by_class.end());
  }
  ContainerFrame frame{s.time, s.reference_pose, std::move(planes)};
  write_container(dir, s.geometry(), sample_channels(s.history_length(), s.horizon()), step, {frame});
}

inline SequenceSample read_sample(const std::filesystem::path& dir, int history, int horizon) {
  const ContainerManifest m = read_manifest(dir);
  if (m.channels != sample_channels(history, horizon))
    throw IoError("sample " + dir.string() + ": channel layout does not match history/horizon");
  if (m.frames.size() != 1) throw IoError("sample " + dir.string() + ": expected one frame");
  ContainerFrame f = read_frame(dir, m, 0);
  const GridGeometry& g = m.geometry;
  SequenceSample s;
  s.time = f.time;
  s.reference_pose = f.pose;
  std::size_t i = 0;
  auto next = [&]() -> Plane& { return f.channels[i++]; };
  for (int k = history; k >= 0; --k) {
    FrameTensor t;
    t.geometry = g;
    t.timestamp = f.time - k * m.timestep;
    for (Plane& c : t.channels) c = std::move(next());
    s.history.push_back(std::move(t));
  }
  s.det_veh.geometry = g;
  s.det_veh.prob = std::move(next());
  s.det_dyn = std::move(next());
  for (Plane& c : s.det_dynamic_by_class) c = std::move(next());
  for (int k = 1; k <= horizon; ++k) {
    FutureTarget t;
    t.veh.geometry = g;
    t.veh.prob = std::move(next());
    t.flow = SceneFlowGrid(g);
    t.flow.fx = std::move(next());
    t.flow.fy = std::move(next());
    t.ogm = OccupancyStateGrid(g);
    t.ogm.unk = std::move(next());
    t.ogm.stat = std::move(next());
    t.ogm.dyn = std::move(next());
    for (Plane& c : t.dynamic_by_class) c = std::move(next());
    s.future.push_back(std::move(t));
  }
  return s;
}

/// Sample times of one scene: t = N*step, N*step + stride, ... while the
/// future window fits.
inline std::vector<double> window_times(const RunConfig& c, double duration) {
  std::vector<double> out;
  const double first = c.history * c.step;
  const double last = duration - c.horizon * c.step;
  for (int k = 0;; ++k) {
    const double t = first + k * c.dataset.window_stride;
    if (t > last + 1e-9) break;
    out.push_back(t);
  }
  return out;
}

/// Scene seeds: seed * (train + val) + i; the first train_scenes go to
/// train, the rest to val.
inline std::uint64_t scene_seed(const RunConfig& c, int index) {
  const auto total = static_cast<std::uint64_t>(c.dataset.train_scenes + c.dataset.val_scenes);
  return c.seed * total + static_cast<std::uint64_t>(index);
}

inline nlohmann::json dataset_meta(const RunConfig& c) {
  return {{"format", kDatasetFormat},
          {"version", kDatasetVersion},
          {"seed", c.seed},
          {"world", c.world},
          {"sensor", c.sensor},
          {"grid", c.grid},
          {"history", c.history},
          {"horizon", c.horizon},
          {"step", c.step},
          {"dataset", c.dataset}};
}

/// Scene seeds of a dataset and how many of them (the first ones) train.
struct SceneSplit {
  std::vector<std::uint64_t> seeds;
  std::size_t train = 0;
};

/// Default split: train_scenes + val_scenes consecutive seeds from scene_seed.
inline SceneSplit default_split(const RunConfig& c) {
  SceneSplit s;
  for (int i = 0; i < c.dataset.train_scenes + c.dataset.val_scenes; ++i) s.seeds.push_back(scene_seed(c, i));
  s.train = static_cast<std::size_t>(c.dataset.train_scenes);
  return s;
}

/// Seeds first..last (inclusive) split in the train:val ratio of `c`.
inline SceneSplit range_split(const RunConfig& c, std::uint64_t first, std::uint64_t last) {
  if (last < first) throw ConfigError("scene seed range is empty");
  if (last - first >= 1000000) throw ConfigError("scene seed range too large (max 1000000 scenes)");
  SceneSplit s;
  for (std::uint64_t k = first; k <= last; ++k) s.seeds.push_back(k);
  const double ratio = static_cast<double>(c.dataset.train_scenes) /
                       static_cast<double>(c.dataset.train_scenes + c.dataset.val_scenes);
  s.train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(s.seeds.size())));
  s.train = std::clamp<std::size_t>(s.train, 1, s.seeds.size());
  return s;
}

/// Generates the dataset of `c` into `c.data_dir`. Deterministic in the
/// config and split: regeneration produces byte-identical files.
inline DatasetIndex generate_dataset(const RunConfig& c, const SceneSplit& split) {
  validate(c);
  const std::filesystem::path root = c.data_dir;
  std::error_code ec;
  std::filesystem::create_directories(root / "scenes", ec);
  if (ec) throw IoError("cannot create dataset directory " + root.string() + ": " + ec.message());
  DatasetIndex idx;
  idx.root = root;
  idx.meta = dataset_meta(c);
  for (std::size_t i = 0; i < split.seeds.size(); ++i) {
    const std::uint64_t seed = split.seeds[i];
    const SceneScript script = generate_scene(seed, c.world);
    char name[64];
    std::snprintf(name, sizeof name, "scene_%06llu.json", static_cast<unsigned long long>(seed));
    gridcast::detail::write_text_atomic(root / "scenes" / name, nlohmann::json(script).dump(2) + "\n");
    const bool is_train = i < split.train;
    for (double t : window_times(c, script.duration)) {
      const SequenceSample s = build_sample(script, t, c.history, c.horizon, c.step, c.sensor, c.grid.geometry());
      std::snprintf(name, sizeof name, "%06llu_%05lld", static_cast<unsigned long long>(seed),
                    static_cast<long long>(std::llround(t * 1000.0)));
      SampleRef ref{std::string(is_train ? "train/" : "val/") + name, seed, t};
      write_sample(root / ref.dir, s, c.step);
      (is_train ? idx.train : idx.val).push_back(ref);
    }
  }
  nlohmann::json j = idx.meta;
  for (const auto* part : {&idx.train, &idx.val}) {
    nlohmann::json arr = nlohmann::json::array();
    for (const SampleRef& r : *part) arr.push_back({{"dir", r.dir}, {"scene_seed", r.scene_seed}, {"time", r.time}});
    j["splits"][part == &idx.train ? "train" : "val"] = arr;
  }
  gridcast::detail::write_text_atomic(root / "dataset.json", j.dump(2) + "\n");
  return idx;
}

inline DatasetIndex generate_dataset(const RunConfig& c) { return generate_dataset(c, default_split(c)); }

inline DatasetIndex open_dataset(const std::filesystem::path& root) {
  std::ifstream in(root / "dataset.json");
  if (!in) throw IoError("no dataset at " + root.string() + " (run `gridcast generate` first)");
  DatasetIndex idx;
  idx.root = root;
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("format") != kDatasetFormat) throw IoError("not a gridcast dataset: " + root.string());
    if (j.at("version").get<int>() != kDatasetVersion) throw IoError("unsupported dataset version");
    for (const char* split : {"train", "val"}) {
      for (const auto& r : j.at("splits").at(split)) {
        (std::string(split) == "train" ? idx.train : idx.val)
            .push_back({r.at("dir").get<std::string>(), r.at("scene_seed").get<std::uint64_t>(),
                        r.at("time").get<double>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset.json in " + root.string() + ": " + e.what());
  }
  j.erase("splits");
  idx.meta = j;
  return idx;
}

/// Rejects a dataset whose window or grid differs from the run config.
inline void require_compatible(const DatasetIndex& idx, const RunConfig& c) {
  const auto& m = idx.meta;
  if (m.at("grid") != nlohmann::json(c.grid) || m.at("history") != c.history || m.at("horizon") != c.horizon ||
      m.at("step") != c.step) {
    throw ConfigError("dataset at " + idx.root.string() + " was generated with a different grid or window (" +
                      m.at("grid").dump() + ", N=" + m.at("history").dump() + ", T=" + m.at("horizon").dump() +
                      ", step=" + m.at("step").dump() + ")");
  }
}

inline SequenceSample load_sample(const DatasetIndex& idx, const SampleRef& r, const RunConfig& c) {
  return read_sample(idx.root / r.dir, c.history, c.horizon);
}

/// Every sample of a split as single-sample tensor batches.
inline std::vector<Batch> load_batches(const DatasetIndex& idx, const std::string& split, const RunConfig& c) {
  std::vector<Batch> out;
  for (const SampleRef& r : idx.split(split)) out.push_back(to_batch(load_sample(idx, r, c)));
  return out;
}

}  // namespace gridcast::nn

#endif  // GRIDCAST_NN_DATASET_HPP
