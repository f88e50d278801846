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

#include "doctest.h"
#include "navig/evalkit.hpp"
#include "navig/training.hpp"
#include "test_support.hpp"
#include "train_support.hpp"

using namespace navig;
using navig::testing::generated_maps;
using navig::testing::open_grid;

namespace {

EpisodeResult result(bool success, double l, double l_star, double d_final = 0.0, double d_init = 1.0) {
  EpisodeResult r;
  r.success = success;
  r.path_length = l;
  r.shortest_length = l_star;
  r.final_geodesic = d_final;
  r.initial_geodesic = d_init;
  return r;
}

EgoMap ego(int size, const std::vector<std::pair<int, int>>& open) {
  EgoMap m;
  m.cells = EgoMap::Cells::Zero(size, size);
  for (const auto& [u, v] : open) m.cells(v, u) = 1;
  return m;
}

EgoMap open_ego(int size) {
  EgoMap m;
  m.cells = EgoMap::Cells::Ones(size, size);
  return m;
}

const MapSet& eval_maps() {
  static const MapSet maps = generated_maps(700, 3);
  return maps;
}

std::vector<LongEpisode> eval_episodes(int per_map, std::uint64_t seed) {
  std::vector<LongEpisode> eps;
  Rng rng(seed);
  for (int k = 0; k < per_map; ++k)
    for (const MapEntry& m : eval_maps()) {
      eps.push_back(sample_long_episode(m.traversability, m.id, rng));
      eps.back().waypoints.clear();
    }
  return eps;
}

}  // namespace

TEST_CASE("spl and soft spl examples") {
  CHECK(spl_term(result(true, 10.0, 5.0)) == 0.5);
  CHECK(spl_term(result(true, 5.0, 5.0)) == 1.0);
  CHECK(spl_term(result(true, 4.0, 5.0)) == 1.0);
  CHECK(spl_term(result(false, 5.0, 5.0)) == 0.0);
  CHECK(soft_spl_term(result(false, 8.0, 4.0, 2.0, 2.0)) == 0.0);
  CHECK(soft_spl_term(result(false, 8.0, 4.0, 1.0, 4.0)) == doctest::Approx(0.375));
  CHECK(soft_spl_term(result(true, 10.0, 5.0)) == 0.5);
  CHECK(soft_spl_term(result(false, 8.0, 4.0, 6.0, 4.0)) == 0.0);

  const Aggregate a = aggregate({result(true, 10.0, 5.0), result(false, 3.0, 5.0, 1.0, 2.0)});
  CHECK(a.episodes == 2);
  CHECK(a.success == 0.5);
  CHECK(a.spl == 0.25);
  CHECK(a.soft_spl == doctest::Approx((0.5 + 0.5) / 2.0));
}

TEST_CASE("soft spl dominates spl on fuzzed result sets") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EpisodeResult> rs;
    const int n = 1 + static_cast<int>(rng.below(20));
    for (int i = 0; i < n; ++i)
      rs.push_back(result(rng.uniform() < 0.5, rng.uniform(0.0, 20.0), rng.uniform(0.1, 10.0), rng.uniform(0.0, 12.0),
                          rng.uniform(0.0, 10.0)));
    const Aggregate a = aggregate(rs);
    CHECK(a.soft_spl >= a.spl);
    CHECK(a.spl <= a.success);
    CHECK(a.spl >= 0.0);
  }
}

TEST_CASE("score_episode measures the travelled path") {
  const OccupancyGrid g = open_grid(40, 20);
  LongEpisode ep;
  ep.map_id = "open";
  ep.start = Pose{0.5, 1.0, 0.0};
  ep.goal = Eigen::Vector2d(3.0, 1.0);
  ep.gt_path_length = 2.5;
  const DistanceField field = distance_field(g, ep.goal, 0.2);
  Trajectory tr;
  for (int i = 0; i <= 10; ++i) tr.poses.push_back(Pose{0.5 + 0.25 * i, 1.0, 0.0});
  tr.stopped = true;
  const EpisodeResult r = score_episode(tr, ep, field);
  CHECK(r.success);
  CHECK(r.steps == 10);
  CHECK(r.path_length == doctest::Approx(2.5));
  CHECK(spl_term(r) == doctest::Approx(1.0));
  tr.stopped = false;
  CHECK_FALSE(score_episode(tr, ep, field).success);
  CHECK_THROWS_AS(score_episode(Trajectory{}, ep, field), std::invalid_argument);
}

TEST_CASE("iou examples") {
  const EgoMap full = ego(5, {{0, 0}, {1, 0}, {2, 0}, {3, 0}});
  CHECK(iou(full, full) == 1.0);
  CHECK(iou(ego(5, {{0, 0}, {1, 0}}), ego(5, {{2, 2}, {3, 3}})) == 0.0);
  CHECK(iou(ego(5, {{0, 0}, {1, 0}}), full) == 0.5);
  CHECK(iou(ego(5, {}), ego(5, {})) == 1.0);
}

TEST_CASE("sym spl examples") {
  CHECK(sym_spl_score({8.0, 1, 1, 1, 1, 1, 1, 1, 1, 1}, {10.0, 1, 1, 1, 1, 1, 1, 1, 1, 1}) == doctest::Approx(0.98));
  CHECK(sym_spl_score({2.0, std::numeric_limits<double>::infinity()}, {4.0, 1.0}) == 0.25);
  CHECK(sym_spl_score({3.0}, {2.0}) == sym_spl_score({2.0}, {3.0}));

  Rng rng(1);
  const EgoMap m = open_ego(9);
  int used = 0;
  CHECK(sym_spl(m, m, 10, rng, &used) == 1.0);
  CHECK(used == 10);
  const EgoMap centre = ego(9, {{4, 4}});
  CHECK(sym_spl(centre, m, 10, rng) == 0.0);
  CHECK(sym_spl(centre, centre, 10, rng, &used) == 1.0);
  CHECK(used == 0);
  CHECK_THROWS(sym_spl(m, ego(9, {}), 10, rng));
}

TEST_CASE("sym spl of a map with itself is one on rendered maps") {
  const MapEntry& me = eval_maps()[0];
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    const LongEpisode ep = sample_long_episode(me.traversability, me.id, rng);
    SeenMask seen(me.grid);
    Rng noise(0);
    observe(me.grid, ep.start, ep.goal, SensorConfig{}, NoiseConfig{}, noise, &seen);
    mark_footprint(seen, me.grid, ep.start.position(), 0.15);
    const EgoMap m = render_ego_gt(me.grid, ep.start, seen);
    CHECK(sym_spl(m, m, 10, rng) == 1.0);
  }
}

TEST_CASE("ego rendering geometry and seen gating") {
  const OccupancyGrid g = open_grid(60, 60);
  const Pose pose{3.0, 3.0, std::numbers::pi / 2.0};
  const Eigen::Vector2d ahead = ego_cell_world(pose, 16, 15, 33, 0.2);
  CHECK(ahead.x() == doctest::Approx(3.0));
  CHECK(ahead.y() == doctest::Approx(3.2));
  const Eigen::Vector2d right = ego_cell_world(pose, 17, 16, 33, 0.2);
  CHECK(right.x() == doctest::Approx(3.2));
  CHECK(right.y() == doctest::Approx(3.0));

  SeenMask all(g);
  all.cells().setOnes();
  const EgoMap full = render_ego_gt(g, pose, all);
  for (int v = 0; v < full.size(); ++v)
    for (int u = 0; u < full.size(); ++u) {
      const Eigen::Vector2d w = ego_cell_world(pose, u, v, 33, 0.2);
      CHECK(full.navigable(u, v) == g.navigable(g.cell_of(w)));
    }

  SeenMask agent(g);
  const CellIndex c = g.cell_of(pose.position());
  agent.mark(c.x(), c.y());
  const EgoMap one = render_ego_gt(g, pose, agent);
  CHECK(one.count() == 1);
  CHECK(one.navigable(16, 16));

  SeenMask partial(g);
  Rng noise(0);
  observe(g, pose, Eigen::Vector2d(1.0, 1.0), SensorConfig{}, NoiseConfig{}, noise, &partial);
  const EgoMap some = render_ego_gt(g, pose, partial);
  SeenMask more = partial;
  observe(g, Pose{3.0, 3.0, 0.0}, Eigen::Vector2d(1.0, 1.0), SensorConfig{}, NoiseConfig{}, noise, &more);
  const EgoMap bigger = render_ego_gt(g, pose, more);
  CHECK(((some.cells <= bigger.cells) && (bigger.cells <= full.cells)).all());
  CHECK(bigger.count() > some.count());
  CHECK_THROWS(render_ego_gt(g, pose, all, 32));
  CHECK(ego_pgm(one).rfind("P5\n33 33\n255\n", 0) == 0);
}

TEST_CASE("evaluation is deterministic and zero noise equals clean") {
  Rng rng(3);
  ad::ParamStore<float> store;
  const MainNet<float> net = MainNet<float>::create(store, AgentDims{}, rng);
  const std::vector<LongEpisode> eps = eval_episodes(2, 9);
  EvalOptions o;
  o.seed = 4;
  o.max_steps = 60;
  const std::string clean = results_csv(evaluate_policy(net, eval_maps(), eps, o));
  CHECK(results_csv(evaluate_policy(net, eval_maps(), eps, o)) == clean);
  o.noise = NoiseConfig{0.0, 0.0, 0.0};
  CHECK(results_csv(evaluate_policy(net, eval_maps(), eps, o)) == clean);

  const std::vector<LongEpisode> head(eps.begin(), eps.begin() + 2);
  o.noise = noisy_eval_config();
  const auto all = evaluate_policy(net, eval_maps(), eps, o);
  const auto part = evaluate_policy(net, eval_maps(), head, o);
  CHECK(results_csv({all[0], all[1]}) == results_csv(part));

  CHECK(clean.rfind("map_id,episode,success,spl,soft_spl,path_length,shortest_length,steps,final_geodesic,initial_geodesic\n",
                    0) == 0);
  CHECK(clean.find("\naggregate,") != std::string::npos);
}

TEST_CASE("probe datasets count, repeat and respect splits") {
  Rng rng(3);
  ad::ParamStore<float> store;
  const MainNet<float> net = MainNet<float>::create(store, AgentDims{}, rng);
  const std::vector<LongEpisode> eps = eval_episodes(2, 17);
  const ProbeDataset a = collect_probe_dataset(net, eval_maps(), eps, 20);
  CHECK(a.size() == 20 * static_cast<int>(eps.size()));
  CHECK(a.maps.rows() == a.size());
  CHECK(a.maps.cols() == 33 * 33);
  const ProbeDataset b = collect_probe_dataset(net, eval_maps(), eps, 20);
  CHECK((a.representations.array() == b.representations.array()).all());
  CHECK((a.maps == b.maps).all());
  for (int i = 0; i < a.size(); ++i) CHECK(a.map(i).navigable(16, 16));
  CHECK_NOTHROW(check_disjoint({"g1", "g2"}, {"g3"}));
  CHECK_THROWS_AS(check_disjoint({"g1", "g2"}, {"g2"}), std::invalid_argument);
}

TEST_CASE("probe training keeps the best validation epoch") {
  Rng rng(3);
  ad::ParamStore<float> store;
  const MainNet<float> net = MainNet<float>::create(store, AgentDims{}, rng);
  const ProbeDataset train = collect_probe_dataset(net, eval_maps(), eval_episodes(2, 21), 10, 9);
  const ProbeDataset val = collect_probe_dataset(net, eval_maps(), eval_episodes(1, 22), 10, 9);
  ProbeConfig cfg;
  cfg.hidden = 32;
  cfg.max_epochs = 12;
  cfg.patience = 2;
  ProbeReport rep;
  const Probe probe = train_probe(train, val, cfg, &rep);
  REQUIRE(rep.best_epoch >= 0);
  const int epochs = static_cast<int>(rep.val_loss.size());
  CHECK(epochs <= std::min(cfg.max_epochs, rep.best_epoch + cfg.patience + 1));
  CHECK(rep.best_val_loss <= rep.val_loss.back());
  for (double v : rep.val_loss) CHECK(rep.best_val_loss <= v);
  CHECK(probe_loss(probe, val) == doctest::Approx(rep.best_val_loss).epsilon(1e-5));
  CHECK(rep.train_loss.front() > rep.train_loss.back());
  const ProbeScores s = score_probe(probe, val, 10, 1);
  CHECK(s.iou >= 0.0);
  CHECK(s.iou <= 1.0);
  CHECK(s.sym_spl >= 0.0);
  CHECK(s.sym_spl <= 1.0);
  CHECK_THROWS(train_probe(ProbeDataset{}, val, cfg));
}
