// Copyright 2026 The foaenc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// On-disk scene dataset:
//
//   <root>/dataset.json
//   <root>/<split>/<scene_id>/mics.wav     Q channels, float32
//   <root>/<split>/<scene_id>/ref_foa.wav  (N+1)^2 channels, ACN/N3D
//   <root>/<split>/<scene_id>/scene.json

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "foaenc/common.hpp"
#include "foaenc/scenegen.hpp"

namespace foaenc {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr std::array<const char*, 3> kSplitNames = {"train", "val",
                                                           "test"};

namespace fs = std::filesystem;

inline nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

inline Vec3 json_vec(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json geometry_json(const ArrayGeometry& g) {
  nlohmann::json positions = nlohmann::json::array();
  for (const auto& p : g.positions) positions.push_back(vec_json(p));
  return {{"positions", positions}};
}

/// Reads {"positions": [[x, y, z], ...], "reference": [x, y, z]}. Without a
/// reference the positions are re-expressed relative to their centroid.
inline ArrayGeometry geometry_from_json(const nlohmann::json& j) {
  if (!j.contains("positions")) throw Error("array JSON lacks 'positions'");
  ArrayGeometry g;
  for (const auto& p : j.at("positions")) g.positions.push_back(json_vec(p));
  if (g.positions.empty()) throw Error("array JSON has no positions");
  const Vec3 reference =
      j.contains("reference") ? json_vec(j.at("reference")) : g.centroid();
  if (j.contains("reference") && (g.centroid() - reference).norm() > 1e-6) {
    throw Error("array centroid is not at the declared reference point");
  }
  for (auto& p : g.positions) p -= reference;
  return g;
}

inline ArrayGeometry named_geometry(const std::string& name) {
  if (name == "tetra") return ArrayGeometry::tetrahedron();
  if (name == "irregular") return ArrayGeometry::irregular();
  std::ifstream is(name);
  if (!is) {
    throw Error("unknown array '" + name +
                "' (expected tetra, irregular or a JSON file)");
  }
  return geometry_from_json(nlohmann::json::parse(is));
}

struct SourceRecord {
  std::string id;
  std::string hash;  // 16 hex digits, FNV-1a of the source material
};

struct SceneRecord {
  std::string scene_id;
  std::string split;
  SceneSpec spec;
  std::vector<SourceRecord> sources;
  ArrayGeometry array;
  std::string array_name;
  SHConfig sh;
  double sample_rate = kDefaultSampleRate;
  double scene_seconds = 2.0;
};

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline nlohmann::json scene_json(const SceneRecord& r) {
  nlohmann::json sources = nlohmann::json::array();
  for (std::size_t i = 0; i < r.spec.source_positions.size(); ++i) {
    sources.push_back({{"position", vec_json(r.spec.source_positions[i])},
                       {"id", r.sources.at(i).id},
                       {"hash", r.sources.at(i).hash}});
  }
  return {
      {"format_version", kDatasetFormatVersion},
      {"scene_id", r.scene_id},
      {"split", r.split},
      {"seed", r.spec.seed},
      {"room",
       {{"dimensions", vec_json(r.spec.room.dimensions)},
        {"absorption", r.spec.room.absorption},
        {"max_image_order", r.spec.room.max_image_order},
        {"speed_of_sound", r.spec.room.speed_of_sound}}},
      {"array",
       {{"name", r.array_name},
        {"position", vec_json(r.spec.array_position)},
        {"geometry", geometry_json(r.array)}}},
      {"sources", sources},
      {"sample_rate", r.sample_rate},
      {"scene_seconds", r.scene_seconds},
      {"ambisonics",
       {{"order", r.sh.order},
        {"ordering", "ACN"},
        {"normalization", "N3D"}}},
  };
}

inline SceneRecord scene_from_json(const nlohmann::json& j) {
  const int version = j.at("format_version").get<int>();
  if (version != kDatasetFormatVersion) {
    throw Error("scene format_version " + std::to_string(version) +
                " is not supported (expected " +
                std::to_string(kDatasetFormatVersion) + ")");
  }
  SceneRecord r;
  r.scene_id = j.at("scene_id").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.spec.seed = j.at("seed").get<std::uint64_t>();
  const auto& room = j.at("room");
  r.spec.room.dimensions = json_vec(room.at("dimensions"));
  r.spec.room.absorption = room.at("absorption").get<double>();
  r.spec.room.max_image_order = room.at("max_image_order").get<int>();
  r.spec.room.speed_of_sound = room.at("speed_of_sound").get<double>();
  const auto& array = j.at("array");
  r.array_name = array.at("name").get<std::string>();
  r.spec.array_position = json_vec(array.at("position"));
  for (const auto& p : array.at("geometry").at("positions")) {
    r.array.positions.push_back(json_vec(p));
  }
  for (const auto& s : j.at("sources")) {
    r.spec.source_positions.push_back(json_vec(s.at("position")));
    r.spec.source_signal_ids.push_back(s.at("id").get<std::string>());
    r.sources.push_back(
        {s.at("id").get<std::string>(), s.at("hash").get<std::string>()});
  }
  r.sample_rate = j.at("sample_rate").get<double>();
  r.scene_seconds = j.at("scene_seconds").get<double>();
  r.sh.order = j.at("ambisonics").at("order").get<int>();
  return r;
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw Error("write failed: " + path.string());
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  return nlohmann::json::parse(is);
}

/// Scene counts per split; the train and val shares are rounded and test
/// takes the remainder.
inline std::array<std::size_t, 3> split_counts(
    std::size_t scenes, const std::array<double, 3>& ratios = {0.8, 0.1,
                                                                0.1}) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (!(total > 0.0) || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
    throw Error("split ratios must be non-negative with a positive sum");
  }
  const auto n = static_cast<double>(scenes);
  auto train = static_cast<std::size_t>(std::llround(n * ratios[0] / total));
  auto val = static_cast<std::size_t>(std::llround(n * ratios[1] / total));
  train = std::min(train, scenes);
  val = std::min(val, scenes - train);
  return {train, val, scenes - train - val};
}

inline std::string scene_id(std::size_t index) {
  std::ostringstream os;
  os << "scene_" << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

/// Scene directories of one split, sorted by name.
inline std::vector<fs::path> list_scenes(const fs::path& root,
                                         const std::string& split) {
  const fs::path dir = root / split;
  if (!fs::is_directory(dir)) {
    throw Error("dataset split directory not found: " + dir.string());
  }
  std::vector<fs::path> scenes;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "scene.json")) {
      scenes.push_back(entry.path());
    }
  }
  std::sort(scenes.begin(), scenes.end());
  return scenes;
}

}  // namespace foaenc
