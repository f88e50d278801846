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

#include "navig/geodesy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>

namespace navig {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHeadingTolerance = 5.0 * std::numbers::pi / 180.0;
// Headings reached by turning are tested with a slightly larger disc so that a
// heading judged free before the turn is still free after it.
constexpr double kTurnMargin = 1e-6;
}  // namespace

Traversability::Traversability(const OccupancyGrid& grid, double clearance)
    : grid_(std::make_shared<const OccupancyGrid>(grid)),
      mask_(OccupancyGrid::Cells::Zero(grid.height(), grid.width())),
      clearance_(clearance) {
  for (int iy = 0; iy < grid.height(); ++iy)
    for (int ix = 0; ix < grid.width(); ++ix)
      if (grid.navigable(ix, iy) && footprint_free(grid, grid.center_of({ix, iy}), clearance)) mask_(iy, ix) = 1;
}

double DistanceField::at(const CellIndex& c) const {
  if (!grid().in_bounds(c)) return kInf;
  return dist(c.y(), c.x());
}

bool DistanceField::reachable(const CellIndex& c) const { return std::isfinite(at(c)); }

std::vector<CellIndex> traversable_neighbours(const Traversability& t, const CellIndex& c, Connectivity connectivity) {
  std::vector<CellIndex> out;
  out.reserve(8);
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const bool diagonal = dx != 0 && dy != 0;
      if (diagonal && connectivity == Connectivity::kFour) continue;
      const CellIndex n{c.x() + dx, c.y() + dy};
      if (!t.traversable(n)) continue;
      if (diagonal && (!t.traversable(c.x() + dx, c.y()) || !t.traversable(c.x(), c.y() + dy))) continue;
      out.push_back(n);
    }
  return out;
}

DistanceField distance_field(std::shared_ptr<const Traversability> traversability, const Eigen::Vector2d& source,
                             Connectivity connectivity) {
  const Traversability& t = *traversability;
  const OccupancyGrid& grid = t.grid();
  DistanceField field;
  field.traversability = traversability;
  field.connectivity = connectivity;
  field.source = source;
  field.source_cell = grid.cell_of(source);
  if (!t.traversable(field.source_cell)) {
    std::ostringstream msg;
    msg << "distance_field: source (" << source.x() << ", " << source.y() << ") is not traversable";
    throw UnreachableError(msg.str());
  }
  field.dist.setConstant(grid.height(), grid.width(), kInf);
  field.parent.assign(static_cast<std::size_t>(grid.size()), -1);

  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  std::vector<std::uint8_t> closed(static_cast<std::size_t>(grid.size()), 0);
  std::vector<Eigen::Vector2i> moves(static_cast<std::size_t>(grid.size()), Eigen::Vector2i::Zero());
  const int s = grid.linear_index(field.source_cell);
  field.dist(field.source_cell.y(), field.source_cell.x()) = 0.0;
  open.emplace(0.0, s);
  const double res = grid.resolution();
  while (!open.empty()) {
    const auto [d, u] = open.top();
    open.pop();
    if (closed[u]) continue;
    closed[u] = 1;
    const CellIndex cu = grid.from_linear(u);
    for (int k = 0; k < 8; ++k) {
      static constexpr int kDx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
      static constexpr int kDy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
      const bool diagonal = kDx[k] != 0 && kDy[k] != 0;
      if (diagonal && connectivity == Connectivity::kFour) continue;
      const CellIndex cv{cu.x() + kDx[k], cu.y() + kDy[k]};
      if (!t.traversable(cv)) continue;
      if (diagonal && (!t.traversable(cu.x() + kDx[k], cu.y()) || !t.traversable(cu.x(), cu.y() + kDy[k]))) continue;
      const int v = grid.linear_index(cv);
      if (closed[v]) continue;
      const Eigen::Vector2i m = moves[u] + (diagonal ? Eigen::Vector2i(0, 1) : Eigen::Vector2i(1, 0));
      const double nd = path_cost(m.x(), m.y(), res);
      double& dv = field.dist(cv.y(), cv.x());
      if (nd < dv) {
        dv = nd;
        moves[v] = m;
        field.parent[v] = u;
        open.emplace(nd, v);
      }
    }
  }
  return field;
}

DistanceField distance_field(const OccupancyGrid& grid, const Eigen::Vector2d& source, double clearance,
                             Connectivity connectivity) {
  return distance_field(std::make_shared<const Traversability>(grid, clearance), source, connectivity);
}

namespace {

// Best reachable cell near p by dist + straight-line offset; {-1,-1} when none.
CellIndex entry_cell(const DistanceField& field, const Eigen::Vector2d& p, double* cost) {
  const OccupancyGrid& grid = field.grid();
  const CellIndex c = grid.cell_of(p);
  double best = kInf;
  CellIndex best_cell{-1, -1};
  for (int radius = 1; radius <= 2 && !std::isfinite(best); ++radius)
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) {
        const CellIndex n{c.x() + dx, c.y() + dy};
        const double d = field.at(n);
        if (!std::isfinite(d)) continue;
        const double total = d + (p - grid.center_of(n)).norm();
        if (total < best) {
          best = total;
          best_cell = n;
        }
      }
  if (cost) *cost = best;
  return best_cell;
}

// Fallback near corners and at the goal: pick the reachable heading (in turn
// increments) whose forward step lowers the cost-to-go most. FORWARD wins
// unless a turn improves on it by more than kForwardHysteresis.
Action best_heading_action(const OccupancyGrid& grid, const Pose& pose, const DistanceField& field,
                           const Kinematics& kin) {
  constexpr double kForwardHysteresis = 0.02;
  const int half_turns = static_cast<int>(std::lround(std::numbers::pi / kin.turn_angle));
  const Eigen::Vector2d p = pose.position();
  double best = kInf;
  int best_k = 0;
  double forward_cost = kInf;
  for (int m = 0; m < 2 * half_turns; ++m) {
    // k = 0, 1, -1, 2, -2, ...: ties keep the smaller rotation, left first.
    const int k = (m % 2 == 1) ? (m + 1) / 2 : -(m / 2);
    const double h = pose.heading + k * kin.turn_angle;
    const Eigen::Vector2d q = p + kin.forward_step * Eigen::Vector2d(std::cos(h), std::sin(h));
    if (!segment_free(grid, p, q, kin.agent_radius + (k == 0 ? 0.0 : kTurnMargin))) continue;
    const double c = geodesic_distance(field, q);
    if (k == 0) forward_cost = c;
    if (c < best) {
      best = c;
      best_k = k;
    }
  }
  if (std::isfinite(forward_cost) && forward_cost <= best + kForwardHysteresis) return Action::kForward;
  return best_k >= 0 ? Action::kTurnLeft : Action::kTurnRight;
}

}  // namespace

double geodesic_distance(const DistanceField& field, const Eigen::Vector2d& p) {
  double cost = kInf;
  entry_cell(field, p, &cost);
  return cost;
}

Path shortest_path(const DistanceField& field, const Eigen::Vector2d& target) {
  const OccupancyGrid& grid = field.grid();
  const CellIndex tc = grid.cell_of(target);
  if (!field.reachable(tc)) {
    std::ostringstream msg;
    msg << "shortest_path: target (" << target.x() << ", " << target.y() << ") is unreachable";
    throw UnreachableError(msg.str());
  }
  Path path;
  for (int i = grid.linear_index(tc); i >= 0; i = field.parent[i]) path.cells.push_back(grid.from_linear(i));
  std::reverse(path.cells.begin(), path.cells.end());
  path.points.reserve(path.cells.size());
  int orthogonal = 0, diagonal = 0;
  for (std::size_t i = 0; i < path.cells.size(); ++i) {
    path.points.push_back(grid.center_of(path.cells[i]));
    if (i > 0) {
      const CellIndex d = path.cells[i] - path.cells[i - 1];
      (d.x() != 0 && d.y() != 0 ? diagonal : orthogonal) += 1;
    }
  }
  path.length = path_cost(orthogonal, diagonal, grid.resolution());
  return path;
}

Action expert_action(const OccupancyGrid& grid, const Pose& pose, const Eigen::Vector2d& goal,
                     const DistanceField& field, double success_radius, const Kinematics& kin) {
  const Eigen::Vector2d p = pose.position();
  if ((p - goal).norm() <= success_radius) return Action::kStop;

  const CellIndex entry = entry_cell(field, p, nullptr);
  if (entry.x() < 0) throw UnreachableError("expert_action: goal unreachable from pose");

  // Walk the parent chain toward the goal and keep the nodes within look-ahead.
  const OccupancyGrid& fgrid = field.grid();
  std::vector<Eigen::Vector2d> chain;
  for (int i = fgrid.linear_index(entry); i >= 0; i = field.parent[i]) {
    const Eigen::Vector2d node = field.parent[i] < 0 ? field.source : fgrid.center_of(fgrid.from_linear(i));
    if ((node - p).norm() > kExpertLookahead) {
      if (chain.empty()) chain.push_back(node);
      break;
    }
    chain.push_back(node);
  }
  // A node is eligible when a full forward step toward it stays free.
  auto eligible = [&](const Eigen::Vector2d& node) {
    const double d = (node - p).norm();
    if (d < 1e-6) return false;
    const Eigen::Vector2d end = p + std::max(d, kin.forward_step) * (node - p) / d;
    return segment_free(grid, p, end, kin.agent_radius);
  };
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    if (!eligible(*it)) continue;
    const double error = wrap_bearing(std::atan2(it->y() - p.y(), it->x() - p.x()) - pose.heading);
    // Among headings reachable by whole turns, move toward the free one closest
    // to the target bearing. Rotating shifts every candidate by one index, so
    // the choice is stable under turns.
    const int half_turns = static_cast<int>(std::lround(std::numbers::pi / kin.turn_angle));
    int best_k = 0;
    double best_gap = kInf;
    for (int m = 0; m < 2 * half_turns; ++m) {
      const int k = (m % 2 == 1) ? (m + 1) / 2 : -(m / 2);
      // FORWARD needs |error| <= 5 deg unless no free heading is closer.
      const double gap = std::max(std::abs(wrap_bearing(error - k * kin.turn_angle)) -
                                      (k == 0 ? kHeadingTolerance : 0.0), 0.0);
      if (gap >= best_gap) continue;
      const double h = pose.heading + k * kin.turn_angle;
      const Eigen::Vector2d q = p + kin.forward_step * Eigen::Vector2d(std::cos(h), std::sin(h));
      if (!segment_free(grid, p, q, kin.agent_radius + (k == 0 ? 0.0 : kTurnMargin))) continue;
      best_gap = gap;
      best_k = k;
    }
    if (!std::isfinite(best_gap)) break;
    if (best_k == 0) return Action::kForward;
    return best_k > 0 ? Action::kTurnLeft : Action::kTurnRight;
  }
  return best_heading_action(grid, pose, field, kin);
}

}  // namespace navig
