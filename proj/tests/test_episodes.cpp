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

#include <filesystem>

#include "doctest.h"
#include "navig/episodes.hpp"
#include "navig/io_util.hpp"
#include "test_support.hpp"

using namespace navig;

namespace {

LongEpisode synthetic(int waypoints, int subgoals) {
  LongEpisode e;
  e.map_id = "synthetic";
  for (int i = 0; i <= 10 * (waypoints + 1); ++i) e.path.emplace_back(0.05 + 0.1 * i, 0.05);
  e.goal = e.path.back();
  e.gt_path_length = 0.1 * (static_cast<double>(e.path.size()) - 1);
  for (int k = 0; k < waypoints; ++k) {
    Waypoint w;
    w.path_index = 10 * (k + 1);
    w.position = e.path[static_cast<std::size_t>(w.path_index)];
    w.arc_length = 0.1 * w.path_index;
    for (int j = 0; j < subgoals; ++j) w.subgoals.push_back({{1.0 * j, 2.0}, 3.0, 5.0});
    e.waypoints.push_back(w);
  }
  return e;
}

std::vector<SegmentKind> kinds(const StepPlan& p) {
  std::vector<SegmentKind> out;
  for (const auto& s : p.segments) out.push_back(s.kind);
  return out;
}

}  // namespace

TEST_CASE("flatten ordering") {
  using K = SegmentKind;
  CHECK(kinds(flatten(synthetic(0, 0), ContinuityVariant::kContinue)) == std::vector<K>{K::kLong});
  CHECK(kinds(flatten(synthetic(1, 2), ContinuityVariant::kContinue)) ==
        std::vector<K>{K::kLong, K::kShort, K::kShort, K::kLong});
  const StepPlan p = flatten(synthetic(2, 1), ContinuityVariant::kRestoreWaypoint);
  CHECK(kinds(p) == std::vector<K>{K::kLong, K::kShort, K::kLong, K::kShort, K::kLong});
  CHECK(p.segments[0].on_start == Directive::kNone);
  CHECK(p.segments[0].save_at_end);
  CHECK(p.segments[1].on_start == Directive::kRestore);
  CHECK(p.segments[1].teleport_back);
  CHECK(p.segments[2].on_start == Directive::kRestore);
  CHECK(!p.segments[4].save_at_end);
  const StepPlan z = flatten(synthetic(1, 1), ContinuityVariant::kZeroAtWaypoint);
  CHECK(z.segments[1].on_start == Directive::kZero);
  CHECK(z.segments[2].on_start == Directive::kZero);
  const StepPlan c = flatten(synthetic(1, 1), ContinuityVariant::kContinue);
  CHECK(c.segments[2].on_start == Directive::kNone);
}

TEST_CASE("sample_long_episode respects constraints and is deterministic") {
  const OccupancyGrid g = generate_map(9);
  const auto t = std::make_shared<const Traversability>(g, kPlanningClearance);
  for (int k = 0; k < 20; ++k) {
    Rng a(k), b(k);
    const LongEpisode e = sample_long_episode(t, "m9", a);
    CHECK(e == sample_long_episode(t, "m9", b));
    const DistanceField f = distance_field(t, e.goal);
    CHECK(e.gt_path_length == f.at(g.cell_of(e.start.position())));
    CHECK(e.gt_path_length >= 2.0);
    CHECK(e.gt_path_length <= 15.0);
    CHECK(e.gt_path_length >= 1.1 * (e.start.position() - e.goal).norm());
    CHECK((e.path.front() - e.start.position()).norm() < 1e-12);
    CHECK((e.path.back() - e.goal).norm() < 1e-12);
    double prev = 0.0;
    for (const Waypoint& w : e.waypoints) {
      CHECK(w.arc_length - prev - 3.0 <= std::sqrt(2.0) * 0.1 + 1e-9);
      CHECK(w.arc_length - prev >= 3.0 - std::sqrt(2.0) * 0.1 - 1e-9);
      prev = w.arc_length;
    }
    const StepPlan plan = flatten(e, ContinuityVariant::kContinue);
    CHECK(plan.long_path(e) == e.path);
  }
}

TEST_CASE("sample_long_episode fails on unsatisfiable bands") {
  MapParams p;
  p.width = p.height = 64;
  const OccupancyGrid g = generate_map(3, p);
  Rng rng(1);
  EpisodeConstraints c;
  c.min_geodesic = 100.0;
  c.max_geodesic = 200.0;
  c.max_goal_attempts = 5;
  CHECK_THROWS_AS(sample_long_episode(g, "small", rng, c), SamplingError);
}

TEST_CASE("mined subgoals satisfy band, ratio and reachability") {
  const OccupancyGrid g = generate_map(12);
  const auto t = std::make_shared<const Traversability>(g, kPlanningClearance);
  MiningConfig cfg;
  Rng rng(5);
  int total = 0;
  for (int k = 0; k < 10; ++k) {
    LongEpisode e = sample_long_episode(t, "m12", rng);
    mine_episode(t, e, cfg);
    for (const Waypoint& w : e.waypoints) {
      CHECK(w.subgoals.size() <= 20);
      const DistanceField f = distance_field(t, w.position);
      double last_ratio = 1e9;
      for (const Subgoal& s : w.subgoals) {
        ++total;
        CHECK(s.d_euclid >= 3.0);
        CHECK(s.d_euclid <= 5.0);
        CHECK(s.ratio() >= 1.5);
        CHECK(s.ratio() <= last_ratio);
        last_ratio = s.ratio();
        CHECK(f.at(g.cell_of(s.position)) == s.d_geodesic);
      }
    }
  }
  CHECK(total > 0);
  Rng blocked(1);
  CHECK_THROWS_AS(mine_subgoals(t, {0.05, 0.05}, cfg, blocked), UnreachableError);
}

TEST_CASE("episode dataset round trip is byte exact") {
  const OccupancyGrid g = generate_map(13);
  const auto t = std::make_shared<const Traversability>(g, kPlanningClearance);
  std::vector<LongEpisode> eps;
  Rng rng(8);
  for (int k = 0; k < 5; ++k) {
    eps.push_back(sample_long_episode(t, "m13", rng));
    mine_episode(t, eps.back(), {});
  }
  const auto dir = std::filesystem::temp_directory_path() / "navig_episode_test";
  write_episodes(dir / "a.jsonl", eps, {});
  MiningConfig m;
  const auto back = read_episodes(dir / "a.jsonl", &m);
  CHECK(back.size() == eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) CHECK(back[i] == eps[i]);
  write_episodes(dir / "b.jsonl", back, m);
  CHECK(read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl"));
  std::filesystem::remove_all(dir);
}
