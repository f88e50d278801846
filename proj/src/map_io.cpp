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

#include "navig/map_io.hpp"

#include <sstream>
#include <stdexcept>

#include "navig/io_util.hpp"

namespace navig {

nlohmann::json to_json(const MapParams& p) {
  return {{"width", p.width},
          {"height", p.height},
          {"resolution", p.resolution},
          {"min_rooms", p.min_rooms},
          {"max_rooms", p.max_rooms},
          {"room_min", p.room_min},
          {"room_max", p.room_max},
          {"corridor_width", p.corridor_width},
          {"walls_per_room", p.walls_per_room},
          {"wall_min", p.wall_min},
          {"wall_max", p.wall_max},
          {"pillars_per_room", p.pillars_per_room},
          {"min_navigable_fraction", p.min_navigable_fraction},
          {"max_navigable_fraction", p.max_navigable_fraction},
          {"max_retries", p.max_retries}};
}

MapParams map_params_from_json(const nlohmann::json& j) {
  MapParams p;
  const nlohmann::json defaults = to_json(p);
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw ConfigError("unknown map parameter '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("width", p.width);
  get("height", p.height);
  get("resolution", p.resolution);
  get("min_rooms", p.min_rooms);
  get("max_rooms", p.max_rooms);
  get("room_min", p.room_min);
  get("room_max", p.room_max);
  get("corridor_width", p.corridor_width);
  get("walls_per_room", p.walls_per_room);
  get("wall_min", p.wall_min);
  get("wall_max", p.wall_max);
  get("pillars_per_room", p.pillars_per_room);
  get("min_navigable_fraction", p.min_navigable_fraction);
  get("max_navigable_fraction", p.max_navigable_fraction);
  get("max_retries", p.max_retries);
  return p;
}

std::string encode_pgm(const OccupancyGrid::Cells& cells) {
  std::ostringstream out;
  out << "P5\n" << cells.cols() << " " << cells.rows() << "\n255\n";
  std::string bytes = out.str();
  bytes.reserve(bytes.size() + static_cast<std::size_t>(cells.size()));
  for (Eigen::Index r = 0; r < cells.rows(); ++r)
    for (Eigen::Index c = 0; c < cells.cols(); ++c) bytes.push_back(cells(r, c) ? static_cast<char>(255) : 0);
  return bytes;
}

OccupancyGrid::Cells decode_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) throw ArtifactError("not a binary 8-bit PGM");
  in.get();  // single whitespace after the header
  const auto offset = static_cast<std::size_t>(in.tellg());
  if (bytes.size() != offset + static_cast<std::size_t>(w) * static_cast<std::size_t>(h))
    throw ArtifactError("PGM payload size mismatch");
  OccupancyGrid::Cells cells(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const auto v = static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(r * w + c)]);
      if (v != 0 && v != 255) throw ArtifactError("PGM value must be 0 or 255");
      cells(r, c) = v == 255 ? 1 : 0;
    }
  return cells;
}

std::filesystem::path sidecar_path(const std::filesystem::path& pgm_path) {
  std::filesystem::path p = pgm_path;
  return p.replace_extension(".json");
}

void save_map(const std::filesystem::path& pgm_path, const OccupancyGrid& grid, const MapParams& params) {
  write_file_atomic(pgm_path, encode_pgm(grid.cells()));
  const nlohmann::json header = {{"schema_version", kMapSchemaVersion},
                                 {"resolution", grid.resolution()},
                                 {"seed", grid.seed()},
                                 {"origin", {grid.origin().x(), grid.origin().y()}},
                                 {"params", to_json(params)}};
  write_file_atomic(sidecar_path(pgm_path), header.dump(2) + "\n");
}

MapFile load_map(const std::filesystem::path& pgm_path) {
  const nlohmann::json header = read_json(sidecar_path(pgm_path));
  if (header.value("schema_version", -1) != kMapSchemaVersion)
    throw ArtifactError("map sidecar schema version mismatch: " + pgm_path.string());
  const OccupancyGrid::Cells cells = decode_pgm(read_file(pgm_path));
  const Eigen::Vector2d origin(header.at("origin").at(0).get<double>(), header.at("origin").at(1).get<double>());
  MapFile out;
  out.params = map_params_from_json(header.at("params"));
  out.grid = OccupancyGrid(static_cast<int>(cells.cols()), static_cast<int>(cells.rows()),
                           header.at("resolution").get<double>(), origin, header.at("seed").get<std::uint64_t>());
  for (int iy = 0; iy < out.grid.height(); ++iy)
    for (int ix = 0; ix < out.grid.width(); ++ix) out.grid.set_navigable(ix, iy, cells(iy, ix) != 0);
  return out;
}

}  // namespace navig
