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

#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "navig/episodes.hpp"
#include "navig/geodesy.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace navig;
using navig::testing::bellman_ford;
using navig::testing::full_grid;
using navig::testing::open_grid;
using navig::testing::random_blocks;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST_CASE("distance_field small examples") {
  const OccupancyGrid g = full_grid(3, 3, 1.0);
  const DistanceField f8 = distance_field(g, {0.5, 0.5}, 0.0);
  CHECK(f8.at({2, 2}) == doctest::Approx(2.0 * std::sqrt(2.0)));
  CHECK(f8.at({0, 0}) == 0.0);
  const DistanceField f4 = distance_field(g, {0.5, 0.5}, 0.0, Connectivity::kFour);
  CHECK(f4.at({2, 2}) == doctest::Approx(4.0));
  const Path p = shortest_path(f8, {2.5, 2.5});
  CHECK(p.length == doctest::Approx(2.0 * std::sqrt(2.0)));
  CHECK(p.cells.size() == 3);
  const Path self = shortest_path(f8, {0.5, 0.5});
  CHECK(self.cells.size() == 1);
  CHECK(self.length == 0.0);
}

TEST_CASE("distance_field errors") {
  OccupancyGrid g = full_grid(3, 3, 1.0);
  g.set_navigable(1, 1, false);
  CHECK_THROWS_AS(distance_field(g, {1.5, 1.5}, 0.0), UnreachableError);
  OccupancyGrid split = full_grid(5, 3, 1.0);
  for (int iy = 0; iy < 3; ++iy) split.set_navigable(2, iy, false);
  const DistanceField f = distance_field(split, {0.5, 0.5}, 0.0);
  CHECK(!f.reachable({4, 1}));
  CHECK_THROWS_AS(shortest_path(f, {4.5, 1.5}), UnreachableError);
}

TEST_CASE("no corner cutting") {
  OccupancyGrid g = full_grid(2, 2, 1.0);
  g.set_navigable(1, 0, false);
  g.set_navigable(0, 1, false);
  const DistanceField f = distance_field(g, {0.5, 0.5}, 0.0);
  CHECK(!f.reachable({1, 1}));
}

TEST_CASE("distance_field equals a Bellman-Ford oracle on random maps") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const OccupancyGrid g = random_blocks(seed, 32, 0.1, 0.3);
    const double clearance = (seed % 2) ? kPlanningClearance : 0.0;
    const auto t = std::make_shared<const Traversability>(g, clearance);
    CellIndex src{-1, -1};
    for (int i = 0; i < g.size() && src.x() < 0; ++i)
      if (t->traversable(g.from_linear((i * 37) % g.size()))) src = g.from_linear((i * 37) % g.size());
    REQUIRE(src.x() >= 0);
    const DistanceField f = distance_field(t, g.center_of(src));
    const std::vector<double> oracle = bellman_ford(g, clearance, src);
    for (int i = 0; i < g.size(); ++i) {
      const double d = f.at(g.from_linear(i));
      INFO(seed, " cell ", i, " field ", d, " oracle ", oracle[i]);
      REQUIRE((d == oracle[i] || (std::isinf(d) && std::isinf(oracle[i]))));
    }
  }
}

TEST_CASE("shortest_path self-consistency") {
  const OccupancyGrid g = generate_map(5);
  const auto t = std::make_shared<const Traversability>(g, kPlanningClearance);
  std::vector<CellIndex> cells;
  for (int i = 0; i < g.size(); ++i)
    if (t->traversable(g.from_linear(i))) cells.push_back(g.from_linear(i));
  Rng rng(1);
  const DistanceField f = distance_field(t, g.center_of(cells[rng.below(cells.size())]));
  for (int k = 0; k < 1000; ++k) {
    const CellIndex c = cells[rng.below(cells.size())];
    if (!f.reachable(c)) continue;
    const Path p = shortest_path(f, g.center_of(c));
    REQUIRE(p.length == doctest::Approx(f.at(c)).epsilon(1e-12));
    for (std::size_t i = 1; i < p.cells.size(); ++i) {
      const CellIndex d = p.cells[i] - p.cells[i - 1];
      REQUIRE(std::max(std::abs(d.x()), std::abs(d.y())) == 1);
    }
  }
}

TEST_CASE("geodesic properties on random pairs") {
  const OccupancyGrid g = generate_map(6);
  const auto t = std::make_shared<const Traversability>(g, kPlanningClearance);
  std::vector<CellIndex> cells;
  for (int i = 0; i < g.size(); ++i)
    if (t->traversable(g.from_linear(i))) cells.push_back(g.from_linear(i));
  const double diag = std::sqrt(2.0) * g.resolution();
  Rng rng(4);
  for (int k = 0; k < 200; ++k) {
    const Eigen::Vector2d a = g.center_of(cells[rng.below(cells.size())]);
    const Eigen::Vector2d b = g.center_of(cells[rng.below(cells.size())]);
    const Eigen::Vector2d c = g.center_of(cells[rng.below(cells.size())]);
    const DistanceField fa = distance_field(t, a), fb = distance_field(t, b);
    const double ab = geodesic_distance(fa, b), ba = geodesic_distance(fb, a);
    if (!std::isfinite(ab) || !std::isfinite(geodesic_distance(fb, c))) continue;
    CHECK(std::abs(ab - ba) <= diag);
    CHECK(ab >= (a - b).norm() - diag);
    CHECK(geodesic_distance(fa, c) <= ab + geodesic_distance(fb, c) + diag);
  }
}

TEST_CASE("expert_action examples") {
  const OccupancyGrid g = open_grid(60, 60, 0.1, {-3.0, -3.0});
  const auto t = std::make_shared<const Traversability>(g, kPlanningClearance);
  const DistanceField ahead = distance_field(t, {1.05, 0.05});
  CHECK(expert_action(g, {0.05, 0.05, 0.0}, {1.05, 0.05}, ahead) == Action::kForward);
  const DistanceField behind = distance_field(t, {-0.95, 0.05});
  CHECK(expert_action(g, {0.05, 0.05, 0.0}, {-0.95, 0.05}, behind) == Action::kTurnLeft);
  CHECK(expert_action(g, {0.9, 0.05, 0.0}, {1.05, 0.05}, ahead) == Action::kStop);
}

TEST_CASE("expert closure on generated maps") {
  int total = 0, success = 0;
  double spl = 0.0;
  for (std::uint64_t m = 0; m < 4; ++m) {
    const OccupancyGrid g = generate_map(100 + m);
    const auto t = std::make_shared<const Traversability>(g, kPlanningClearance);
    Rng rng(m);
    EpisodeConstraints c;
    c.min_geodesic = 0.5;
    c.max_geodesic = 5.0;
    c.min_ratio = 1.0;
    for (int e = 0; e < 25; ++e) {
      const LongEpisode ep = sample_long_episode(t, "m", rng, c);
      const DistanceField f = distance_field(t, ep.goal);
      const int limit = static_cast<int>(std::ceil(ep.gt_path_length / 0.25)) + 36 * 3;
      Pose p = ep.start;
      double len = 0.0;
      bool ok = false;
      for (int s = 0; s < limit; ++s) {
        const Action a = expert_action(g, p, ep.goal, f);
        if (a == Action::kStop) {
          ok = (p.position() - ep.goal).norm() <= kSuccessRadius;
          break;
        }
        const auto r = step(g, p, a, {}, rng);
        len += (r.pose.position() - p.position()).norm();
        p = r.pose;
      }
      ++total;
      if (ok) {
        ++success;
        spl += ep.gt_path_length / std::max(len, ep.gt_path_length);
      }
    }
  }
  CHECK(success >= total * 99 / 100);
  CHECK(spl / total >= 0.9);
}
