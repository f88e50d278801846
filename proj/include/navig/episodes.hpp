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

#ifndef NAVIG_EPISODES_HPP
#define NAVIG_EPISODES_HPP

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "navig/geodesy.hpp"
#include "navig/world.hpp"

namespace navig {

/// Clearance used for every planning query (episodes, expert, reward).
inline constexpr double kPlanningClearance = 0.20;
inline constexpr int kEpisodeSchemaVersion = 1;

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpisodeConstraints {
  double min_geodesic = 2.0;
  double max_geodesic = 15.0;
  double min_ratio = 1.1;  // d_G / d_E
  int max_goal_attempts = 64;
};

struct MiningConfig {
  double waypoint_spacing = 3.0;
  int subgoals_per_waypoint = 20;
  double band_lo = 3.0;
  double band_hi = 5.0;
  double ratio_threshold = 1.5;
  int oversample = 10;

  void validate() const;
};

struct Subgoal {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double d_euclid = 0.0;
  double d_geodesic = 0.0;

  double ratio() const { return d_geodesic / d_euclid; }
};

struct Waypoint {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double arc_length = 0.0;
  int path_index = 0;
  int candidates = 0;  // sampled before filtering
  std::vector<Subgoal> subgoals;
};

struct LongEpisode {
  std::string map_id;
  std::uint64_t seed = 0;  // root of the per-waypoint mining streams
  Pose start;
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  double gt_path_length = 0.0;
  std::vector<Eigen::Vector2d> path;  // start -> goal cell centres
  std::vector<Waypoint> waypoints;

  bool operator==(const LongEpisode& other) const;
};

/// Start and goal cell centres drawn on the traversable set; the start heading
/// is uniform. Waypoints sit at the first path node whose arc length reaches
/// each multiple of `waypoint_spacing`. `goal_field` receives the distance
/// field of the goal when given.
LongEpisode sample_long_episode(std::shared_ptr<const Traversability> traversability, const std::string& map_id,
                                Rng& rng, const EpisodeConstraints& constraints = {},
                                double waypoint_spacing = 3.0, DistanceField* goal_field = nullptr);
LongEpisode sample_long_episode(const OccupancyGrid& grid, const std::string& map_id, Rng& rng,
                                const EpisodeConstraints& constraints = {}, double waypoint_spacing = 3.0);

/// Places waypoints on `episode.path`.
void place_waypoints(LongEpisode& episode, const OccupancyGrid& grid, double spacing);

/// Candidates are traversable cell centres with d_E in the band, drawn without
/// replacement. Survivors pass d_G / d_E >= T and are ranked by ratio, ties by
/// candidate draw order.
std::vector<Subgoal> mine_subgoals(std::shared_ptr<const Traversability> traversability,
                                   const Eigen::Vector2d& waypoint, const MiningConfig& config, Rng& rng,
                                   int* candidates = nullptr);
std::vector<Subgoal> mine_subgoals(const OccupancyGrid& grid, const Eigen::Vector2d& waypoint,
                                   const MiningConfig& config, Rng& rng, int* candidates = nullptr);

/// Mines every waypoint with the stream derived from (episode seed, waypoint index).
void mine_episode(std::shared_ptr<const Traversability> traversability, LongEpisode& episode,
                  const MiningConfig& config);

enum class ContinuityVariant { kZeroAtWaypoint, kRestoreWaypoint, kContinue };

std::string_view continuity_name(ContinuityVariant v);  // "c1", "c2", "c3"
ContinuityVariant parse_continuity(std::string_view name);

enum class SegmentKind : std::uint8_t { kLong = 0, kShort = 1 };

/// What happens to the main recurrent state when a segment begins.
enum class Directive : std::uint8_t { kNone = 0, kZero = 1, kRestore = 2 };

struct Segment {
  SegmentKind kind = SegmentKind::kLong;
  int waypoint = -1;  // long: index of the waypoint ending the segment (-1 for the final leg); short: origin waypoint
  int subgoal = -1;   // short only
  Eigen::Vector2d target = Eigen::Vector2d::Zero();
  int path_begin = 0;  // long only, inclusive node range on the long path
  int path_end = 0;
  bool save_at_end = false;      // snapshot r when the segment completes (waypoint reached)
  bool teleport_back = false;    // short only
  Directive on_start = Directive::kNone;
};

struct StepPlan {
  std::vector<Segment> segments;

  /// Long-path nodes reassembled from the long segments.
  std::vector<Eigen::Vector2d> long_path(const LongEpisode& episode) const;
};

StepPlan flatten(const LongEpisode& episode, ContinuityVariant continuity);

nlohmann::json to_json(const LongEpisode& episode);
LongEpisode episode_from_json(const nlohmann::json& j);

/// JSON lines: a header line {schema_version, kind, mining} then one episode per line.
void write_episodes(const std::filesystem::path& path, const std::vector<LongEpisode>& episodes,
                    const MiningConfig& mining);
std::vector<LongEpisode> read_episodes(const std::filesystem::path& path, MiningConfig* mining = nullptr);

nlohmann::json to_json(const MiningConfig& config);
MiningConfig mining_from_json(const nlohmann::json& j);

}  // namespace navig

#endif  // NAVIG_EPISODES_HPP
