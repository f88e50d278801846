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

#include "navig/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace navig {

double wrap_heading(double angle) {
  double h = std::fmod(angle, kTwoPi);
  if (h < 0.0) h += kTwoPi;
  if (h >= kTwoPi) h = 0.0;
  return h;
}

double wrap_bearing(double angle) {
  double b = std::fmod(angle, kTwoPi);
  if (b <= -std::numbers::pi) b += kTwoPi;
  if (b > std::numbers::pi) b -= kTwoPi;
  return b;
}

OccupancyGrid::OccupancyGrid(int width, int height, double resolution, Eigen::Vector2d origin, std::uint64_t seed)
    : cells_(Cells::Zero(height, width)), resolution_(resolution), origin_(origin), seed_(seed) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("OccupancyGrid: non-positive size");
  if (!(resolution > 0.0)) throw std::invalid_argument("OccupancyGrid: resolution must be > 0");
}

CellIndex OccupancyGrid::cell_of(const Eigen::Vector2d& p) const {
  const Eigen::Vector2d local = (p - origin_) / resolution_;
  return {static_cast<int>(std::floor(local.x())), static_cast<int>(std::floor(local.y()))};
}

Eigen::Vector2d OccupancyGrid::center_of(const CellIndex& c) const {
  return origin_ + (c.cast<double>() + Eigen::Vector2d::Constant(0.5)) * resolution_;
}

std::size_t OccupancyGrid::navigable_count() const { return static_cast<std::size_t>((cells_ != 0).count()); }

double OccupancyGrid::navigable_fraction() const {
  return static_cast<double>(navigable_count()) / static_cast<double>(size());
}

bool OccupancyGrid::operator==(const OccupancyGrid& other) const {
  return resolution_ == other.resolution_ && origin_ == other.origin_ && seed_ == other.seed_ &&
         cells_.rows() == other.cells_.rows() && cells_.cols() == other.cells_.cols() &&
         (cells_ == other.cells_).all();
}

namespace {

// Labels 4-connected navigable components; returns labels (-1 blocked) and sizes.
std::vector<int> label_components(const OccupancyGrid& grid, std::vector<std::size_t>& sizes) {
  std::vector<int> label(static_cast<std::size_t>(grid.size()), -1);
  std::vector<int> stack;
  sizes.clear();
  for (int start = 0; start < grid.size(); ++start) {
    if (label[start] >= 0 || !grid.navigable(grid.from_linear(start))) continue;
    const int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    stack.push_back(start);
    label[start] = id;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      ++sizes[id];
      const CellIndex c = grid.from_linear(cur);
      const CellIndex nbrs[4] = {{c.x() + 1, c.y()}, {c.x() - 1, c.y()}, {c.x(), c.y() + 1}, {c.x(), c.y() - 1}};
      for (const auto& n : nbrs) {
        if (!grid.navigable(n)) continue;
        const int ni = grid.linear_index(n);
        if (label[ni] >= 0) continue;
        label[ni] = id;
        stack.push_back(ni);
      }
    }
  }
  return label;
}

void carve_rect(OccupancyGrid& grid, int x0, int y0, int w, int h, bool value) {
  for (int y = std::max(y0, 0); y < std::min(y0 + h, grid.height()); ++y)
    for (int x = std::max(x0, 0); x < std::min(x0 + w, grid.width()); ++x) grid.set_navigable(x, y, value);
}

int cells_for(double meters, double res) { return std::max(1, static_cast<int>(std::lround(meters / res))); }

struct Room {
  int x0, y0, w, h;
  CellIndex center() const { return {x0 + w / 2, y0 + h / 2}; }
};

OccupancyGrid attempt_map(std::uint64_t seed, const MapParams& p, Rng& rng) {
  OccupancyGrid grid(p.width, p.height, p.resolution, Eigen::Vector2d::Zero(), seed);
  const double res = p.resolution;
  const int span = p.max_rooms - p.min_rooms + 1;
  const int n_rooms = p.min_rooms + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));

  std::vector<Room> rooms;
  for (int i = 0; i < n_rooms; ++i) {
    const int w = std::min(cells_for(rng.uniform(p.room_min, p.room_max), res), p.width - 2);
    const int h = std::min(cells_for(rng.uniform(p.room_min, p.room_max), res), p.height - 2);
    const int x0 = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(p.width - 1 - w)));
    const int y0 = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(p.height - 1 - h)));
    rooms.push_back({x0, y0, w, h});
    carve_rect(grid, x0, y0, w, h, true);
  }

  const int cw = cells_for(p.corridor_width, res);
  for (std::size_t i = 1; i < rooms.size(); ++i) {
    const CellIndex a = rooms[i - 1].center();
    const CellIndex b = rooms[i].center();
    const bool horizontal_first = rng.below(2) == 0;
    const CellIndex corner = horizontal_first ? CellIndex{b.x(), a.y()} : CellIndex{a.x(), b.y()};
    auto carve_leg = [&](const CellIndex& from, const CellIndex& to) {
      const int x0 = std::min(from.x(), to.x()) - cw / 2;
      const int y0 = std::min(from.y(), to.y()) - cw / 2;
      const int w = std::abs(from.x() - to.x()) + cw;
      const int h = std::abs(from.y() - to.y()) + cw;
      carve_rect(grid, x0, y0, w, h, true);
    };
    carve_leg(a, corner);
    carve_leg(corner, b);
  }

  for (const Room& room : rooms) {
    for (int k = 0; k < p.walls_per_room; ++k) {
      const int len = cells_for(rng.uniform(p.wall_min, p.wall_max), res);
      const int thick = 1 + static_cast<int>(rng.below(2));
      const bool vertical = rng.below(2) == 0;
      const int wx = vertical ? thick : len;
      const int wy = vertical ? len : thick;
      const int x0 = room.x0 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, room.w))));
      const int y0 = room.y0 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, room.h))));
      carve_rect(grid, x0 - wx / 2, y0 - wy / 2, wx, wy, false);
    }
    for (int k = 0; k < p.pillars_per_room; ++k) {
      const int s = cells_for(rng.uniform(0.2, 0.5), res);
      const int x0 = room.x0 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, room.w))));
      const int y0 = room.y0 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, room.h))));
      carve_rect(grid, x0 - s / 2, y0 - s / 2, s, s, false);
    }
  }

  for (int x = 0; x < p.width; ++x) {
    grid.set_navigable(x, 0, false);
    grid.set_navigable(x, p.height - 1, false);
  }
  for (int y = 0; y < p.height; ++y) {
    grid.set_navigable(0, y, false);
    grid.set_navigable(p.width - 1, y, false);
  }

  // Keep only the largest component so every navigable cell is connected.
  std::vector<std::size_t> sizes;
  const std::vector<int> label = label_components(grid, sizes);
  if (!sizes.empty()) {
    const int keep = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    for (int i = 0; i < grid.size(); ++i)
      if (label[i] >= 0 && label[i] != keep) {
        const CellIndex c = grid.from_linear(i);
        grid.set_navigable(c.x(), c.y(), false);
      }
  }
  return grid;
}

}  // namespace

std::size_t largest_component_size(const OccupancyGrid& grid) {
  std::vector<std::size_t> sizes;
  label_components(grid, sizes);
  return sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());
}

void check_grid_invariants(const OccupancyGrid& grid) {
  if (!(grid.resolution() > 0.0)) throw std::invalid_argument("grid resolution must be > 0");
  for (int x = 0; x < grid.width(); ++x)
    if (grid.navigable(x, 0) || grid.navigable(x, grid.height() - 1))
      throw std::invalid_argument("grid border cell is navigable");
  for (int y = 0; y < grid.height(); ++y)
    if (grid.navigable(0, y) || grid.navigable(grid.width() - 1, y))
      throw std::invalid_argument("grid border cell is navigable");
  if (largest_component_size(grid) < 100) throw std::invalid_argument("no navigable component of >= 100 cells");
}

OccupancyGrid generate_map(std::uint64_t seed, const MapParams& params) {
  if (params.width < 8 || params.height < 8) throw std::invalid_argument("map too small");
  if (!(params.resolution > 0.0)) throw std::invalid_argument("map resolution must be > 0");
  if (params.min_rooms < 0 || params.max_rooms < params.min_rooms)
    throw std::invalid_argument("invalid room count range");
  if (params.min_navigable_fraction > params.max_navigable_fraction)
    throw std::invalid_argument("invalid navigable fraction range");

  Rng rng(seed);
  for (int attempt = 0; attempt < params.max_retries; ++attempt) {
    OccupancyGrid grid = attempt_map(seed, params, rng);
    const double fraction = grid.navigable_fraction();
    if (fraction < params.min_navigable_fraction || fraction > params.max_navigable_fraction) continue;
    if (largest_component_size(grid) < 100) continue;
    return grid;
  }
  std::ostringstream msg;
  msg << "generate_map: no grid with navigable fraction in [" << params.min_navigable_fraction << ", "
      << params.max_navigable_fraction << "] after " << params.max_retries << " attempts (seed " << seed << ")";
  throw MapGenerationError(msg.str());
}

std::string_view action_name(Action a) {
  switch (a) {
    case Action::kForward: return "FORWARD";
    case Action::kTurnLeft: return "TURN_LEFT";
    case Action::kTurnRight: return "TURN_RIGHT";
    case Action::kStop: return "STOP";
  }
  return "?";
}

void NoiseConfig::validate() const {
  if (!(obs_sigma >= 0.0) || !(range_trunc >= 0.0) || !(act_noise_intensity >= 0.0))
    throw std::invalid_argument("NoiseConfig fields must be >= 0");
}

GoalVector goal_vector(const Pose& pose, const Eigen::Vector2d& goal) {
  const Eigen::Vector2d d = goal - pose.position();
  GoalVector g;
  g.distance = d.norm();
  g.bearing = g.distance > 0.0 ? wrap_bearing(std::atan2(d.y(), d.x()) - pose.heading) : 0.0;
  return g;
}

namespace {

double rect_distance(const OccupancyGrid& grid, const Eigen::Vector2d& p, int ix, int iy) {
  const double res = grid.resolution();
  const double x0 = grid.origin().x() + ix * res;
  const double y0 = grid.origin().y() + iy * res;
  const double dx = std::max({x0 - p.x(), 0.0, p.x() - (x0 + res)});
  const double dy = std::max({y0 - p.y(), 0.0, p.y() - (y0 + res)});
  return std::hypot(dx, dy);
}

}  // namespace

bool footprint_free(const OccupancyGrid& grid, const Eigen::Vector2d& center, double radius) {
  const CellIndex lo = grid.cell_of(center - Eigen::Vector2d::Constant(radius));
  const CellIndex hi = grid.cell_of(center + Eigen::Vector2d::Constant(radius));
  for (int iy = lo.y(); iy <= hi.y(); ++iy)
    for (int ix = lo.x(); ix <= hi.x(); ++ix)
      if (!grid.navigable(ix, iy) && rect_distance(grid, center, ix, iy) < radius) return false;
  return true;
}

void mark_footprint(SeenMask& seen, const OccupancyGrid& grid, const Eigen::Vector2d& center, double radius) {
  const CellIndex lo = grid.cell_of(center - Eigen::Vector2d::Constant(radius));
  const CellIndex hi = grid.cell_of(center + Eigen::Vector2d::Constant(radius));
  for (int iy = lo.y(); iy <= hi.y(); ++iy)
    for (int ix = lo.x(); ix <= hi.x(); ++ix)
      if (rect_distance(grid, center, ix, iy) < radius) seen.mark(ix, iy);
}

bool segment_free(const OccupancyGrid& grid, const Eigen::Vector2d& a, const Eigen::Vector2d& b, double radius) {
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / (0.25 * grid.resolution()))));
  for (int i = 1; i <= n; ++i) {
    const Eigen::Vector2d p = a + (b - a) * (static_cast<double>(i) / n);
    if (!footprint_free(grid, p, radius)) return false;
  }
  return true;
}

StepResult step(const OccupancyGrid& grid, const Pose& pose, Action action, const NoiseConfig& noise, Rng& rng,
                const Kinematics& kin) {
  StepResult out{pose, false, false};
  const double sigma = 0.2 * noise.act_noise_intensity;
  switch (action) {
    case Action::kStop:
      out.stopped = true;
      return out;
    case Action::kTurnLeft:
    case Action::kTurnRight: {
      const double eps = sigma > 0.0 ? sigma * rng.normal() : 0.0;
      const double sign = action == Action::kTurnLeft ? 1.0 : -1.0;
      out.pose.heading = wrap_heading(pose.heading + sign * kin.turn_angle * (1.0 + eps));
      return out;
    }
    case Action::kForward: {
      const double eps = sigma > 0.0 ? sigma * rng.normal() : 0.0;
      const double len = std::max(0.0, kin.forward_step * (1.0 + eps));
      const Eigen::Vector2d from = pose.position();
      const Eigen::Vector2d to = from + len * Eigen::Vector2d(std::cos(pose.heading), std::sin(pose.heading));
      if (!segment_free(grid, from, to, kin.agent_radius)) {
        out.collided = true;
        return out;
      }
      out.pose.x = to.x();
      out.pose.y = to.y();
      return out;
    }
  }
  return out;
}

double cast_ray(const OccupancyGrid& grid, const Eigen::Vector2d& origin, double angle, double max_range,
                SeenMask* seen) {
  const double res = grid.resolution();
  const Eigen::Vector2d dir(std::cos(angle), std::sin(angle));
  const Eigen::Vector2d local = (origin - grid.origin()) / res;
  int ix = static_cast<int>(std::floor(local.x()));
  int iy = static_cast<int>(std::floor(local.y()));
  if (seen) seen->mark(ix, iy);
  if (!grid.navigable(ix, iy)) return 0.0;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int sx = dir.x() > 0.0 ? 1 : -1;
  const int sy = dir.y() > 0.0 ? 1 : -1;
  double t_max_x = kInf, t_max_y = kInf, t_delta_x = kInf, t_delta_y = kInf;
  if (dir.x() != 0.0) {
    t_delta_x = res / std::abs(dir.x());
    t_max_x = (sx > 0 ? (ix + 1 - local.x()) : (local.x() - ix)) * t_delta_x;
  }
  if (dir.y() != 0.0) {
    t_delta_y = res / std::abs(dir.y());
    t_max_y = (sy > 0 ? (iy + 1 - local.y()) : (local.y() - iy)) * t_delta_y;
  }

  for (;;) {
    double t;
    if (t_max_x < t_max_y) {
      t = t_max_x;
      if (t >= max_range) return max_range;
      ix += sx;
      t_max_x += t_delta_x;
    } else {
      t = t_max_y;
      if (t >= max_range) return max_range;
      iy += sy;
      t_max_y += t_delta_y;
    }
    if (seen) seen->mark(ix, iy);
    if (!grid.navigable(ix, iy)) return t;
  }
}

double ray_angle(const Pose& pose, const SensorConfig& sensor, int i) {
  return pose.heading + 0.5 * sensor.fov - (i + 0.5) * sensor.fov / sensor.rays;
}

Observation observe(const OccupancyGrid& grid, const Pose& pose, const Eigen::Vector2d& goal,
                    const SensorConfig& sensor, const NoiseConfig& noise, Rng& rng, SeenMask* seen,
                    bool prev_collided) {
  if (sensor.rays < 1 || !(sensor.fov > 0.0) || sensor.fov > kTwoPi || !(sensor.max_range > 0.0))
    throw std::invalid_argument("observe: invalid sensor configuration");
  Observation obs;
  obs.ranges.resize(sensor.rays);
  const Eigen::Vector2d p = pose.position();
  const double d_max = sensor.max_range;
  for (int i = 0; i < sensor.rays; ++i) {
    double r = cast_ray(grid, p, ray_angle(pose, sensor, i), d_max, seen);
    if (noise.obs_sigma > 0.0) r = std::clamp(r + noise.obs_sigma * d_max * rng.normal(), 0.0, d_max);
    if (noise.range_trunc > 0.0 && r > noise.range_trunc) r = noise.range_trunc;
    obs.ranges[i] = r;
  }
  obs.goal = goal_vector(pose, goal);
  obs.prev_collided = prev_collided;
  return obs;
}

}  // namespace navig
