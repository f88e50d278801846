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

#ifndef NAVIG_GEODESY_HPP
#define NAVIG_GEODESY_HPP

#include <Eigen/Core>

#include <memory>
#include <stdexcept>
#include <vector>

#include "navig/world.hpp"

namespace navig {

enum class Connectivity { kFour, kEight };

class UnreachableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cells whose centre keeps at least `clearance` from every blocked cell,
/// i.e. the obstacle map inflated by the agent radius.
class Traversability {
 public:
  Traversability(const OccupancyGrid& grid, double clearance);

  const OccupancyGrid& grid() const { return *grid_; }
  double clearance() const { return clearance_; }
  bool traversable(int ix, int iy) const {
    return grid_->in_bounds(ix, iy) && mask_(iy, ix) != 0;
  }
  bool traversable(const CellIndex& c) const { return traversable(c.x(), c.y()); }
  const OccupancyGrid::Cells& mask() const { return mask_; }

 private:
  std::shared_ptr<const OccupancyGrid> grid_;
  OccupancyGrid::Cells mask_;
  double clearance_;
};

/// Edge length between 8-neighbours.
inline double edge_length(int dx, int dy, double resolution) {
  return (dx != 0 && dy != 0) ? resolution * 1.4142135623730951 : resolution;
}

/// Length of a path with the given numbers of orthogonal and diagonal moves.
/// Costs are always evaluated from the move counts so that equal paths give
/// bit-identical lengths regardless of summation order.
inline double path_cost(int orthogonal, int diagonal, double resolution) {
  return resolution * (orthogonal + 1.4142135623730951 * diagonal);
}

/// Single-source geodesic distances over the traversable cells.
struct DistanceField {
  std::shared_ptr<const Traversability> traversability;
  Connectivity connectivity = Connectivity::kEight;
  Eigen::Vector2d source = Eigen::Vector2d::Zero();
  CellIndex source_cell = CellIndex::Zero();
  Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dist;  // +inf when unreachable
  std::vector<int> parent;  // linear index of the predecessor toward the source, -1 at source/unreached

  const OccupancyGrid& grid() const { return traversability->grid(); }
  double at(const CellIndex& c) const;
  bool reachable(const CellIndex& c) const;
};

/// Dijkstra from `source`; ties broken by (cost, row-major index).
/// Diagonal moves never cut a corner. Throws UnreachableError if the source is
/// not traversable.
DistanceField distance_field(std::shared_ptr<const Traversability> traversability, const Eigen::Vector2d& source,
                             Connectivity connectivity = Connectivity::kEight);
DistanceField distance_field(const OccupancyGrid& grid, const Eigen::Vector2d& source, double clearance,
                             Connectivity connectivity = Connectivity::kEight);

/// Neighbour offsets allowed from `c` under the field's connectivity.
std::vector<CellIndex> traversable_neighbours(const Traversability& t, const CellIndex& c, Connectivity connectivity);

/// Cost-to-source from an arbitrary point: min over nearby reachable cells of
/// dist(cell) + |p - centre(cell)|. Equals dist(cell) at reachable cell centres.
/// +inf when no reachable cell lies within two cells of p.
double geodesic_distance(const DistanceField& field, const Eigen::Vector2d& p);

struct Path {
  std::vector<CellIndex> cells;
  std::vector<Eigen::Vector2d> points;
  double length = 0.0;
};

/// Parent-chain extraction from the field source to `target`.
Path shortest_path(const DistanceField& field, const Eigen::Vector2d& target);

inline constexpr double kSuccessRadius = 0.2;
inline constexpr double kExpertLookahead = 0.5;

/// Shortest-path expert toward the field source (the goal).
Action expert_action(const OccupancyGrid& grid, const Pose& pose, const Eigen::Vector2d& goal,
                     const DistanceField& field, double success_radius = kSuccessRadius,
                     const Kinematics& kin = {});

}  // namespace navig

#endif  // NAVIG_GEODESY_HPP
