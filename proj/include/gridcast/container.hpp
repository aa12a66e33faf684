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

#ifndef GRIDCAST_CONTAINER_HPP
#define GRIDCAST_CONTAINER_HPP

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcast/grid.hpp"

/// \file
/// On-disk grid container: a directory holding manifest.json and one raw
/// file per frame (float32, little-endian, channel-major then row-major).

namespace gridcast {

inline constexpr const char* kContainerFormat = "gridcast-grid-container";
inline constexpr int kContainerVersion = 1;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ContainerFrame {
  double time = 0.0;
  Pose2 pose;  // ego pose at capture time
  std::vector<Plane> channels;
};

struct ContainerManifest {
  GridGeometry geometry;
  std::vector<std::string> channels;
  double timestep = 0.5;
  struct Entry {
    int index = 0;
    double time = 0.0;
    Pose2 pose;
    std::string file;
  };
  std::vector<Entry> frames;
};

inline nlohmann::json pose_json(const Pose2& p) { return {{"x", p.x}, {"y", p.y}, {"heading", p.heading}}; }
inline Pose2 pose_from_json(const nlohmann::json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("heading").get<double>()};
}

inline nlohmann::json geometry_json(const GridGeometry& g) {
  return {{"width", g.width}, {"height", g.height}, {"resolution", g.resolution}, {"origin_pose", pose_json(g.origin_pose)}};
}
inline GridGeometry geometry_from_json(const nlohmann::json& j) {
  GridGeometry g;
  g.width = j.at("width").get<int>();
  g.height = j.at("height").get<int>();
  g.resolution = j.at("resolution").get<double>();
  g.origin_pose = pose_from_json(j.at("origin_pose"));
  validate(g);
  return g;
}

namespace detail {

inline std::uint32_t swap_bytes(std::uint32_t u) {
  return (u >> 24) | ((u >> 8) & 0xFF00u) | ((u << 8) & 0xFF0000u) | (u << 24);
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f << text;
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_planes(const std::filesystem::path& path, const std::vector<Plane>& planes) {
  std::vector<char> bytes;
  for (const Plane& p : planes) {
    for (float v : p.values()) {
      auto u = std::bit_cast<std::uint32_t>(v);
      if constexpr (std::endian::native == std::endian::big) u = swap_bytes(u);
      char b[4];
      std::memcpy(b, &u, 4);
      bytes.insert(bytes.end(), b, b + 4);
    }
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<Plane> read_planes(const std::filesystem::path& path, int channels, int h, int w) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  const std::size_t n = static_cast<std::size_t>(channels) * h * w;
  std::vector<char> bytes(n * 4);
  f.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(f.gcount()) != bytes.size() || f.peek() != std::char_traits<char>::eof())
    throw IoError("frame file has wrong size: " + path.string());
  std::vector<Plane> planes(static_cast<std::size_t>(channels), Plane(h, w));
  std::size_t off = 0;
  for (Plane& p : planes) {
    for (float& v : p.values()) {
      std::uint32_t u;
      std::memcpy(&u, bytes.data() + off, 4);
      if constexpr (std::endian::native == std::endian::big) u = swap_bytes(u);
      v = std::bit_cast<float>(u);
      off += 4;
    }
  }
  return planes;
}

}  // namespace detail

/// Writes `frames` into directory `dir` (created if missing).
inline void write_container(const std::filesystem::path& dir, const GridGeometry& geometry,
                            const std::vector<std::string>& channels, double timestep,
                            const std::vector<ContainerFrame>& frames) {
  validate(geometry);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json m;
  m["format"] = kContainerFormat;
  m["version"] = kContainerVersion;
  m["geometry"] = geometry_json(geometry);
  m["channels"] = channels;
  m["dtype"] = "float32";
  m["byte_order"] = "little-endian";
  m["layout"] = "CHW row-major, row 0 at the top";
  m["timestep"] = timestep;
  m["frame_count"] = frames.size();
  m["frames"] = nlohmann::json::array();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const ContainerFrame& fr = frames[i];
    if (fr.channels.size() != channels.size()) throw GridError("write_container: channel count mismatch");
    for (const Plane& p : fr.channels) {
      if (p.height() != geometry.height || p.width() != geometry.width)
        throw GridError("write_container: plane shape does not match geometry");
    }
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.bin", i);
    detail::write_planes(dir / name, fr.channels);
    m["frames"].push_back({{"index", i}, {"time", fr.time}, {"pose", pose_json(fr.pose)}, {"file", name}});
  }
  detail::write_text_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

inline ContainerManifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw IoError("missing manifest in " + dir.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (m.value("format", "") != kContainerFormat) throw IoError("not a grid container: " + dir.string());
  if (m.value("version", 0) != kContainerVersion) throw IoError("unsupported container version in " + dir.string());
  if (m.value("dtype", "") != "float32" || m.value("byte_order", "") != "little-endian")
    throw IoError("unsupported container encoding in " + dir.string());
  ContainerManifest out;
  out.geometry = geometry_from_json(m.at("geometry"));
  out.channels = m.at("channels").get<std::vector<std::string>>();
  out.timestep = m.at("timestep").get<double>();
  for (const auto& e : m.at("frames")) {
    out.frames.push_back({e.at("index").get<int>(), e.at("time").get<double>(), pose_from_json(e.at("pose")),
                          e.at("file").get<std::string>()});
  }
  if (out.frames.size() != m.at("frame_count").get<std::size_t>()) throw IoError("frame_count mismatch");
  return out;
}

inline ContainerFrame read_frame(const std::filesystem::path& dir, const ContainerManifest& m, std::size_t index) {
  if (index >= m.frames.size()) throw IoError("frame index out of range");
  const auto& e = m.frames[index];
  ContainerFrame fr;
  fr.time = e.time;
  fr.pose = e.pose;
  fr.channels = detail::read_planes(dir / e.file, static_cast<int>(m.channels.size()), m.geometry.height,
                                    m.geometry.width);
  return fr;
}

}  // namespace gridcast

#endif  // GRIDCAST_CONTAINER_HPP
