// Copyright 2026 The Navigability Authors
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

#ifndef NAVIG_MAP_IO_HPP
#define NAVIG_MAP_IO_HPP

#include <filesystem>
#include <string>

#include "json.hpp"
#include "navig/world.hpp"

namespace navig {

inline constexpr int kMapSchemaVersion = 1;

nlohmann::json to_json(const MapParams& params);
MapParams map_params_from_json(const nlohmann::json& j);

/// Binary PGM (P5): 0 = blocked, 255 = navigable, first image row = iy 0.
std::string encode_pgm(const OccupancyGrid::Cells& cells);
OccupancyGrid::Cells decode_pgm(const std::string& bytes);

struct MapFile {
  OccupancyGrid grid;
  MapParams params;
};

/// Writes `<stem>.pgm` plus the `<stem>.json` sidecar
/// {schema_version, resolution, seed, origin, params}.
void save_map(const std::filesystem::path& pgm_path, const OccupancyGrid& grid, const MapParams& params);
MapFile load_map(const std::filesystem::path& pgm_path);

std::filesystem::path sidecar_path(const std::filesystem::path& pgm_path);

}  // namespace navig

#endif  // NAVIG_MAP_IO_HPP
