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

#ifndef NAVIG_WORLD_HPP
#define NAVIG_WORLD_HPP

#include <Eigen/Core>

#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include "navig/rng.hpp"

namespace navig {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps an angle into the canonical [0, 2pi) representative.
double wrap_heading(double angle);

/// Wraps an angle into (-pi, pi].
double wrap_bearing(double angle);

using CellIndex = Eigen::Vector2i;  // (ix, iy)

/// 2D navigability grid. Cell (ix, iy) covers the world square
/// [origin + (ix, iy) * res, origin + (ix + 1, iy + 1) * res).
class OccupancyGrid {
 public:
  using Cells = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  OccupancyGrid() = default;
  /// All cells start blocked.
  OccupancyGrid(int width, int height, double resolution,
                Eigen::Vector2d origin = Eigen::Vector2d::Zero(), std::uint64_t seed = 0);

  int width() const { return static_cast<int>(cells_.cols()); }
  int height() const { return static_cast<int>(cells_.rows()); }
  double resolution() const { return resolution_; }
  const Eigen::Vector2d& origin() const { return origin_; }
  std::uint64_t seed() const { return seed_; }
  const Cells& cells() const { return cells_; }

  bool in_bounds(int ix, int iy) const { return ix >= 0 && iy >= 0 && ix < width() && iy < height(); }
  bool in_bounds(const CellIndex& c) const { return in_bounds(c.x(), c.y()); }

  /// Out-of-bounds cells read as blocked.
  bool navigable(int ix, int iy) const { return in_bounds(ix, iy) && cells_(iy, ix) != 0; }
  bool navigable(const CellIndex& c) const { return navigable(c.x(), c.y()); }
  void set_navigable(int ix, int iy, bool value) { cells_(iy, ix) = value ? 1 : 0; }

  CellIndex cell_of(const Eigen::Vector2d& p) const;
  Eigen::Vector2d center_of(const CellIndex& c) const;
  int linear_index(const CellIndex& c) const { return c.y() * width() + c.x(); }
  CellIndex from_linear(int index) const { return {index % width(), index / width()}; }
  int size() const { return width() * height(); }

  std::size_t navigable_count() const;
  double navigable_fraction() const;

  bool operator==(const OccupancyGrid& other) const;

 private:
  Cells cells_;
  double resolution_ = 0.1;
  Eigen::Vector2d origin_ = Eigen::Vector2d::Zero();
  std::uint64_t seed_ = 0;
};

/// Size of the largest 4-connected navigable component.
std::size_t largest_component_size(const OccupancyGrid& grid);

/// Throws std::invalid_argument naming the violated invariant.
void check_grid_invariants(const OccupancyGrid& grid);

struct MapParams {
  int width = 96;
  int height = 96;
  double resolution = 0.1;
  int min_rooms = 4;
  int max_rooms = 8;
  double room_min = 1.4;  // meters
  double room_max = 3.4;
  double corridor_width = 0.6;
  int walls_per_room = 1;  // interior partition walls, they create detours
  double wall_min = 0.8;
  double wall_max = 2.0;
  int pillars_per_room = 1;
  double min_navigable_fraction = 0.2;
  double max_navigable_fraction = 0.7;
  int max_retries = 64;
};

class MapGenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rooms-and-corridors generator. Identical (seed, params) give identical grids.
OccupancyGrid generate_map(std::uint64_t seed, const MapParams& params = {});

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // [0, 2pi)

  Eigen::Vector2d position() const { return {x, y}; }
  bool operator==(const Pose&) const = default;
};

enum class Action : std::uint8_t { kForward = 0, kTurnLeft = 1, kTurnRight = 2, kStop = 3 };

inline constexpr int kNumActions = 4;
/// Previous-action index used at the start of an episode or segment.
inline constexpr int kStartToken = 4;

std::string_view action_name(Action a);

struct Kinematics {
  double forward_step = 0.25;
  double turn_angle = 10.0 * std::numbers::pi / 180.0;
  double agent_radius = 0.15;
};

struct SensorConfig {
  int rays = 64;
  double fov = std::numbers::pi / 2.0;
  double max_range = 5.0;
};

struct NoiseConfig {
  double obs_sigma = 0.0;
  double range_trunc = 0.0;  // 0 disables truncation
  double act_noise_intensity = 0.0;

  bool is_zero() const { return obs_sigma == 0.0 && range_trunc == 0.0 && act_noise_intensity == 0.0; }
  void validate() const;
  bool operator==(const NoiseConfig&) const = default;
};

/// Distance and agent-frame bearing to a world point.
struct GoalVector {
  double distance = 0.0;
  double bearing = 0.0;  // (-pi, pi]
};

GoalVector goal_vector(const Pose& pose, const Eigen::Vector2d& goal);

struct Observation {
  Eigen::VectorXd ranges;
  GoalVector goal;
  bool prev_collided = false;
};

/// Cells swept by rays or covered by the agent during the current trajectory.
class SeenMask {
 public:
  SeenMask() = default;
  explicit SeenMask(const OccupancyGrid& grid) : seen_(OccupancyGrid::Cells::Zero(grid.height(), grid.width())) {}

  void reset() { seen_.setZero(); }
  void mark(int ix, int iy) {
    if (ix >= 0 && iy >= 0 && ix < seen_.cols() && iy < seen_.rows()) seen_(iy, ix) = 1;
  }
  bool seen(int ix, int iy) const {
    return ix >= 0 && iy >= 0 && ix < seen_.cols() && iy < seen_.rows() && seen_(iy, ix) != 0;
  }
  std::size_t count() const { return static_cast<std::size_t>((seen_ != 0).count()); }
  const OccupancyGrid::Cells& cells() const { return seen_; }
  OccupancyGrid::Cells& cells() { return seen_; }

 private:
  OccupancyGrid::Cells seen_;
};

/// True when a disc of the given radius overlaps only navigable cells.
bool footprint_free(const OccupancyGrid& grid, const Eigen::Vector2d& center, double radius);

/// Marks every cell overlapped by the agent disc.
void mark_footprint(SeenMask& seen, const OccupancyGrid& grid, const Eigen::Vector2d& center, double radius);

/// True when a disc swept along the segment from a to b stays free.
bool segment_free(const OccupancyGrid& grid, const Eigen::Vector2d& a, const Eigen::Vector2d& b, double radius);

struct StepResult {
  Pose pose;
  bool collided = false;
  bool stopped = false;
};

/// Applies one discrete action. A blocked FORWARD leaves the pose unchanged.
StepResult step(const OccupancyGrid& grid, const Pose& pose, Action action, const NoiseConfig& noise, Rng& rng,
                const Kinematics& kin = {});

/// Exact grid traversal; distance to the first blocked cell, capped at max_range.
/// Cells traversed up to the hit are marked in `seen` when given.
double cast_ray(const OccupancyGrid& grid, const Eigen::Vector2d& origin, double angle, double max_range,
                SeenMask* seen = nullptr);

/// Ray i points at heading + fov/2 - (i + 1/2) fov / K.
double ray_angle(const Pose& pose, const SensorConfig& sensor, int i);

Observation observe(const OccupancyGrid& grid, const Pose& pose, const Eigen::Vector2d& goal,
                    const SensorConfig& sensor, const NoiseConfig& noise, Rng& rng, SeenMask* seen = nullptr,
                    bool prev_collided = false);

}  // namespace navig

#endif  // NAVIG_WORLD_HPP
