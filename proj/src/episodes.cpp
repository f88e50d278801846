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

#include "navig/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "navig/io_util.hpp"

namespace navig {

void MiningConfig::validate() const {
  if (!(waypoint_spacing > 0.0)) throw ConfigError("mining: waypoint_spacing must be > 0");
  if (subgoals_per_waypoint < 1) throw ConfigError("mining: subgoals_per_waypoint must be >= 1");
  if (!(band_lo > 0.0) || !(band_hi >= band_lo)) throw ConfigError("mining: band must satisfy 0 < lo <= hi");
  if (!(ratio_threshold >= 1.0)) throw ConfigError("mining: ratio_threshold must be >= 1");
  if (oversample < 1) throw ConfigError("mining: oversample must be >= 1");
}

bool LongEpisode::operator==(const LongEpisode& other) const { return to_json(*this) == to_json(other); }

namespace {

std::vector<CellIndex> traversable_cells(const Traversability& t) {
  std::vector<CellIndex> cells;
  const OccupancyGrid& g = t.grid();
  for (int iy = 0; iy < g.height(); ++iy)
    for (int ix = 0; ix < g.width(); ++ix)
      if (t.traversable(ix, iy)) cells.emplace_back(ix, iy);
  return cells;
}

}  // namespace

void place_waypoints(LongEpisode& episode, const OccupancyGrid& grid, double spacing) {
  episode.waypoints.clear();
  if (!(spacing > 0.0)) return;
  int orthogonal = 0, diagonal = 0;
  int k = 1;
  for (std::size_t i = 1; i < episode.path.size(); ++i) {
    const CellIndex d = grid.cell_of(episode.path[i]) - grid.cell_of(episode.path[i - 1]);
    (d.x() != 0 && d.y() != 0 ? diagonal : orthogonal) += 1;
    const double arc = path_cost(orthogonal, diagonal, grid.resolution());
    if (arc >= k * spacing && arc < episode.gt_path_length && i + 1 < episode.path.size()) {
      Waypoint w;
      w.position = episode.path[i];
      w.arc_length = arc;
      w.path_index = static_cast<int>(i);
      episode.waypoints.push_back(w);
      while (arc >= k * spacing) ++k;
    }
  }
}

LongEpisode sample_long_episode(std::shared_ptr<const Traversability> traversability, const std::string& map_id,
                                Rng& rng, const EpisodeConstraints& constraints, double waypoint_spacing,
                                DistanceField* goal_field) {
  const Traversability& t = *traversability;
  const OccupancyGrid& grid = t.grid();
  const std::vector<CellIndex> cells = traversable_cells(t);
  if (cells.empty()) throw SamplingError("sample_long_episode: map '" + map_id + "' has no traversable cell");
  for (int attempt = 0; attempt < constraints.max_goal_attempts; ++attempt) {
    const CellIndex goal_cell = cells[rng.below(cells.size())];
    const Eigen::Vector2d goal = grid.center_of(goal_cell);
    DistanceField field = distance_field(traversability, goal);
    std::vector<CellIndex> starts;
    for (const CellIndex& c : cells) {
      const double dg = field.at(c);
      if (!std::isfinite(dg) || dg < constraints.min_geodesic || dg > constraints.max_geodesic) continue;
      const double de = (grid.center_of(c) - goal).norm();
      if (dg < constraints.min_ratio * de) continue;
      starts.push_back(c);
    }
    if (starts.empty()) continue;
    const CellIndex start_cell = starts[rng.below(starts.size())];
    LongEpisode ep;
    ep.map_id = map_id;
    ep.seed = rng.next();
    const Eigen::Vector2d s = grid.center_of(start_cell);
    ep.start = {s.x(), s.y(), wrap_heading(rng.uniform(0.0, kTwoPi))};
    ep.goal = goal;
    Path p = shortest_path(field, s);  // goal -> start
    std::reverse(p.points.begin(), p.points.end());
    ep.path = std::move(p.points);
    ep.gt_path_length = p.length;
    place_waypoints(ep, grid, waypoint_spacing);
    if (goal_field) *goal_field = std::move(field);
    return ep;
  }
  std::ostringstream msg;
  msg << "sample_long_episode: no start/goal pair with d_G in [" << constraints.min_geodesic << ", "
      << constraints.max_geodesic << "] and ratio >= " << constraints.min_ratio << " on map '" << map_id << "' after "
      << constraints.max_goal_attempts << " attempts";
  throw SamplingError(msg.str());
}

LongEpisode sample_long_episode(const OccupancyGrid& grid, const std::string& map_id, Rng& rng,
                                const EpisodeConstraints& constraints, double waypoint_spacing) {
  return sample_long_episode(std::make_shared<const Traversability>(grid, kPlanningClearance), map_id, rng,
                             constraints, waypoint_spacing);
}

std::vector<Subgoal> mine_subgoals(std::shared_ptr<const Traversability> traversability,
                                   const Eigen::Vector2d& waypoint, const MiningConfig& config, Rng& rng,
                                   int* candidates) {
  config.validate();
  const Traversability& t = *traversability;
  const OccupancyGrid& grid = t.grid();
  if (!t.traversable(grid.cell_of(waypoint))) throw UnreachableError("mine_subgoals: waypoint is blocked");

  std::vector<CellIndex> annulus;
  for (const CellIndex& c : traversable_cells(t)) {
    const double de = (grid.center_of(c) - waypoint).norm();
    if (de >= config.band_lo && de <= config.band_hi) annulus.push_back(c);
  }
  // Partial Fisher-Yates: the first n entries are a uniform draw without replacement.
  const std::size_t n = std::min<std::size_t>(annulus.size(),
                                              static_cast<std::size_t>(config.subgoals_per_waypoint) *
                                                  static_cast<std::size_t>(config.oversample));
  for (std::size_t i = 0; i < n; ++i) std::swap(annulus[i], annulus[i + rng.below(annulus.size() - i)]);
  if (candidates) *candidates = static_cast<int>(n);

  const DistanceField field = distance_field(traversability, waypoint);
  struct Scored {
    Subgoal subgoal;
    std::size_t index;
  };
  std::vector<Scored> kept;
  for (std::size_t i = 0; i < n; ++i) {
    Subgoal s;
    s.position = grid.center_of(annulus[i]);
    s.d_euclid = (s.position - waypoint).norm();
    s.d_geodesic = field.at(annulus[i]);
    if (!std::isfinite(s.d_geodesic) || s.d_geodesic < config.ratio_threshold * s.d_euclid) continue;
    kept.push_back({s, i});
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Scored& a, const Scored& b) {
    const double ra = a.subgoal.ratio(), rb = b.subgoal.ratio();
    if (ra != rb) return ra > rb;
    return a.index < b.index;
  });
  if (kept.size() > static_cast<std::size_t>(config.subgoals_per_waypoint))
    kept.resize(static_cast<std::size_t>(config.subgoals_per_waypoint));
  std::vector<Subgoal> out;
  out.reserve(kept.size());
  for (const Scored& s : kept) out.push_back(s.subgoal);
  return out;
}

std::vector<Subgoal> mine_subgoals(const OccupancyGrid& grid, const Eigen::Vector2d& waypoint,
                                   const MiningConfig& config, Rng& rng, int* candidates) {
  return mine_subgoals(std::make_shared<const Traversability>(grid, kPlanningClearance), waypoint, config, rng,
                       candidates);
}

void mine_episode(std::shared_ptr<const Traversability> traversability, LongEpisode& episode,
                  const MiningConfig& config) {
  for (std::size_t k = 0; k < episode.waypoints.size(); ++k) {
    Waypoint& w = episode.waypoints[k];
    Rng rng = Rng::derive(episode.seed, k + 1);
    w.subgoals = mine_subgoals(traversability, w.position, config, rng, &w.candidates);
  }
}

std::string_view continuity_name(ContinuityVariant v) {
  switch (v) {
    case ContinuityVariant::kZeroAtWaypoint:
      return "c1";
    case ContinuityVariant::kRestoreWaypoint:
      return "c2";
    case ContinuityVariant::kContinue:
      return "c3";
  }
  return "?";
}

ContinuityVariant parse_continuity(std::string_view name) {
  if (name == "c1") return ContinuityVariant::kZeroAtWaypoint;
  if (name == "c2") return ContinuityVariant::kRestoreWaypoint;
  if (name == "c3") return ContinuityVariant::kContinue;
  throw ConfigError("unknown continuity variant '" + std::string(name) + "' (expected c1, c2 or c3)");
}

StepPlan flatten(const LongEpisode& episode, ContinuityVariant continuity) {
  const Directive after_waypoint = continuity == ContinuityVariant::kZeroAtWaypoint    ? Directive::kZero
                                   : continuity == ContinuityVariant::kRestoreWaypoint ? Directive::kRestore
                                                                                       : Directive::kNone;
  StepPlan plan;
  int begin = 0;
  for (std::size_t k = 0; k <= episode.waypoints.size(); ++k) {
    Segment leg;
    leg.kind = SegmentKind::kLong;
    leg.path_begin = begin;
    leg.on_start = k == 0 ? Directive::kNone : after_waypoint;
    if (k < episode.waypoints.size()) {
      const Waypoint& w = episode.waypoints[k];
      leg.waypoint = static_cast<int>(k);
      leg.target = w.position;
      leg.path_end = w.path_index;
      leg.save_at_end = true;
    } else {
      leg.target = episode.goal;
      leg.path_end = static_cast<int>(episode.path.size()) - 1;
    }
    plan.segments.push_back(leg);
    if (k == episode.waypoints.size()) break;
    const Waypoint& w = episode.waypoints[k];
    for (std::size_t j = 0; j < w.subgoals.size(); ++j) {
      Segment s;
      s.kind = SegmentKind::kShort;
      s.waypoint = static_cast<int>(k);
      s.subgoal = static_cast<int>(j);
      s.target = w.subgoals[j].position;
      s.teleport_back = true;
      s.on_start = after_waypoint;
      plan.segments.push_back(s);
    }
    begin = w.path_index;
  }
  return plan;
}

std::vector<Eigen::Vector2d> StepPlan::long_path(const LongEpisode& episode) const {
  std::vector<Eigen::Vector2d> out;
  for (const Segment& s : segments) {
    if (s.kind != SegmentKind::kLong) continue;
    for (int i = s.path_begin + (out.empty() ? 0 : 1); i <= s.path_end; ++i)
      out.push_back(episode.path[static_cast<std::size_t>(i)]);
  }
  return out;
}

namespace {

nlohmann::json point(const Eigen::Vector2d& p) { return nlohmann::json::array({p.x(), p.y()}); }
Eigen::Vector2d point(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

nlohmann::json to_json(const LongEpisode& e) {
  nlohmann::json path = nlohmann::json::array();
  for (const auto& p : e.path) path.push_back(point(p));
  nlohmann::json waypoints = nlohmann::json::array();
  for (const Waypoint& w : e.waypoints) {
    nlohmann::json subgoals = nlohmann::json::array();
    for (const Subgoal& s : w.subgoals)
      subgoals.push_back({{"position", point(s.position)}, {"d_euclid", s.d_euclid}, {"d_geodesic", s.d_geodesic}});
    waypoints.push_back({{"position", point(w.position)},
                         {"arc_length", w.arc_length},
                         {"path_index", w.path_index},
                         {"candidates", w.candidates},
                         {"subgoals", subgoals}});
  }
  return {{"map_id", e.map_id},
          {"seed", e.seed},
          {"start", {e.start.x, e.start.y, e.start.heading}},
          {"goal", point(e.goal)},
          {"gt_path_length", e.gt_path_length},
          {"path", path},
          {"waypoints", waypoints}};
}

LongEpisode episode_from_json(const nlohmann::json& j) {
  LongEpisode e;
  e.map_id = j.at("map_id").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  const auto& s = j.at("start");
  e.start = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
  e.goal = point(j.at("goal"));
  e.gt_path_length = j.at("gt_path_length").get<double>();
  for (const auto& p : j.at("path")) e.path.push_back(point(p));
  for (const auto& jw : j.at("waypoints")) {
    Waypoint w;
    w.position = point(jw.at("position"));
    w.arc_length = jw.at("arc_length").get<double>();
    w.path_index = jw.at("path_index").get<int>();
    w.candidates = jw.at("candidates").get<int>();
    for (const auto& js : jw.at("subgoals"))
      w.subgoals.push_back(
          {point(js.at("position")), js.at("d_euclid").get<double>(), js.at("d_geodesic").get<double>()});
    e.waypoints.push_back(std::move(w));
  }
  return e;
}

nlohmann::json to_json(const MiningConfig& c) {
  return {{"waypoint_spacing", c.waypoint_spacing}, {"subgoals_per_waypoint", c.subgoals_per_waypoint},
          {"band_lo", c.band_lo},                   {"band_hi", c.band_hi},
          {"ratio_threshold", c.ratio_threshold},   {"oversample", c.oversample}};
}

MiningConfig mining_from_json(const nlohmann::json& j) {
  MiningConfig c;
  const nlohmann::json defaults = to_json(c);
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw ConfigError("unknown mining parameter '" + key + "'");
  c.waypoint_spacing = j.value("waypoint_spacing", c.waypoint_spacing);
  c.subgoals_per_waypoint = j.value("subgoals_per_waypoint", c.subgoals_per_waypoint);
  c.band_lo = j.value("band_lo", c.band_lo);
  c.band_hi = j.value("band_hi", c.band_hi);
  c.ratio_threshold = j.value("ratio_threshold", c.ratio_threshold);
  c.oversample = j.value("oversample", c.oversample);
  c.validate();
  return c;
}

void write_episodes(const std::filesystem::path& path, const std::vector<LongEpisode>& episodes,
                    const MiningConfig& mining) {
  std::string out = nlohmann::json{{"schema_version", kEpisodeSchemaVersion},
                                   {"kind", "long_episodes"},
                                   {"count", episodes.size()},
                                   {"mining", to_json(mining)}}
                        .dump();
  out += '\n';
  for (const LongEpisode& e : episodes) {
    out += to_json(e).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<LongEpisode> read_episodes(const std::filesystem::path& path, MiningConfig* mining) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ArtifactError(path.string() + ": empty episode file");
  const nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("kind", "") != "long_episodes")
    throw ArtifactError(path.string() + ": not an episode dataset");
  if (header.value("schema_version", -1) != kEpisodeSchemaVersion)
    throw ArtifactError(path.string() + ": episode schema version mismatch");
  if (mining) *mining = mining_from_json(header.at("mining"));
  std::vector<LongEpisode> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ArtifactError(path.string() + ": malformed episode line");
    out.push_back(episode_from_json(j));
  }
  if (out.size() != header.at("count").get<std::size_t>()) throw ArtifactError(path.string() + ": truncated dataset");
  return out;
}

}  // namespace navig
