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

// Acceptance suite: one PASS/FAIL line per criterion. Usage:
//   navig_acceptance [criterion ...]
// NAVIG_ACCEPT_WS selects the training workspace (default ./acceptance_ws).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "navig/agents.hpp"
#include "navig/autodiff.hpp"
#include "navig/config.hpp"
#include "navig/episodes.hpp"
#include "navig/evalkit.hpp"
#include "navig/experiment.hpp"
#include "navig/geodesy.hpp"
#include "navig/io_util.hpp"
#include "navig/training.hpp"
#include "oracles.hpp"
#include "test_support.hpp"
#include "train_support.hpp"

using namespace navig;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  int mismatches = 0, cells = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const OccupancyGrid g = testing::random_blocks(1000 + seed, 32, 0.1, 0.3);
    const double clearance = (seed % 2) ? kPlanningClearance : 0.0;
    const auto t = std::make_shared<const Traversability>(g, clearance);
    Rng rng(seed);
    CellIndex src{-1, -1};
    while (src.x() < 0) {
      const CellIndex c = g.from_linear(static_cast<int>(rng.below(static_cast<std::uint64_t>(g.size()))));
      if (t->traversable(c)) src = c;
    }
    const DistanceField f = distance_field(t, g.center_of(src));
    const std::vector<double> oracle = testing::bellman_ford(g, clearance, src);
    for (int i = 0; i < g.size(); ++i) {
      const double d = f.at(g.from_linear(i));
      ++cells;
      if (!(d == oracle[i] || (std::isinf(d) && std::isinf(oracle[i])))) ++mismatches;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {mismatches == 0 && secs < 5.0, std::to_string(mismatches) + " mismatches over " + std::to_string(cells) +
                                             " cells on 50 maps, " + fmt("%.2f s (limit 5 s)", secs)};
}

// ---------------------------------------------------------------------------

Outcome expert_competence() {
  const auto t0 = std::chrono::steady_clock::now();
  EpisodeConstraints c;
  c.min_geodesic = 1.0;
  c.max_geodesic = 5.0;
  c.min_ratio = 1.0;
  int total = 0, success = 0;
  double spl = 0.0;
  for (int m = 0; m < 20; ++m) {
    const MapEntry map = make_map_entry("x", generate_map(7000 + static_cast<std::uint64_t>(m)));
    Rng rng(static_cast<std::uint64_t>(m));
    for (int e = 0; e < 50; ++e) {
      DistanceField field;
      const LongEpisode ep = sample_long_episode(map.traversability, map.id, rng, c, 0.0, &field);
      Pose p = ep.start;
      double len = 0.0;
      bool ok = false;
      Rng noise(0);
      for (int s = 0; s < 500; ++s) {
        const Action a = expert_action(map.grid, p, ep.goal, field);
        if (a == Action::kStop) {
          ok = (p.position() - ep.goal).norm() <= kSuccessRadius;
          break;
        }
        const StepResult r = step(map.grid, p, a, NoiseConfig{}, noise);
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
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double rate = static_cast<double>(success) / total;
  spl /= total;
  return {rate >= 0.99 && spl >= 0.90 && secs < 30.0,
          std::to_string(success) + "/" + std::to_string(total) + " succeed, SPL " + fmt("%.4f", spl) + ", " +
              fmt("%.1f s (limit 30 s)", secs)};
}

// ---------------------------------------------------------------------------

using ad::Mat;
using ad::Tape;
using MatD = Mat<double>;

MatD random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  return ad::uniform_init<double>(r, c, scale, rng);
}

template <typename T>
struct TapeScalar;
template <typename S>
struct TapeScalar<Tape<S>> {
  using type = S;
};

template <typename S>
Var<S> weighted(Tape<S>& t, Var<S> x, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum(ad::mul(x, t.constant(random_mat(x.rows(), x.cols(), rng).template cast<S>())));
}

template <typename S>
S lit(const Var<S>&, double x) {
  return static_cast<S>(x);
}

// Inputs become parameters "in0", "in1", ... of `store` so that the numeric
// side can run in extended precision.
template <typename F>
double op_check(F&& f, std::vector<MatD> inputs, ad::ParamStore<double> store = {}) {
  for (std::size_t i = 0; i < inputs.size(); ++i) store.add("in" + std::to_string(i), std::move(inputs[i]));
  const std::size_t n = inputs.size();
  auto loss = [&]<typename S>(Tape<S>& t, ad::ParamStore<S>& st) {
    std::vector<Var<S>> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(t.param(st.get("in" + std::to_string(i))));
    return f(t, v, st);
  };
  return ad::grad_check_params_extended(loss, store, 1e-6);
}

// Returns the worst relative error over every op for one random configuration.
double op_checks(Rng& rng, std::string* worst_op) {
  using namespace navig::ad;
  const auto r = static_cast<Eigen::Index>(1 + rng.below(5));
  const auto c = static_cast<Eigen::Index>(2 + rng.below(5));
  const std::uint64_t w = rng.next();
  double worst = 0.0;
  auto record = [&](const char* name, double e) {
    if (!(e <= worst)) {
      worst = std::isnan(e) ? std::numeric_limits<double>::infinity() : e;
      *worst_op = name;
    }
  };
#define NAVIG_OP(name, expr, ...) \
  record(name, op_check([&](auto& t, const auto& v, auto&) { return expr; }, __VA_ARGS__))
  NAVIG_OP("matmul", weighted(t, matmul(v[0], v[1]), w), {random_mat(r, c, rng), random_mat(c, 3, rng)});
  NAVIG_OP("linear", weighted(t, linear(v[0], v[1], v[2]), w),
           {random_mat(r, c, rng), random_mat(c, 3, rng), random_mat(1, 3, rng)});
  NAVIG_OP("add", weighted(t, add(v[0], v[1]), w), {random_mat(r, c, rng), random_mat(r, c, rng)});
  NAVIG_OP("sub", weighted(t, sub(v[0], v[1]), w), {random_mat(r, c, rng), random_mat(r, c, rng)});
  NAVIG_OP("mul", weighted(t, mul(v[0], v[1]), w), {random_mat(r, c, rng), random_mat(r, c, rng)});
  NAVIG_OP("add_bias", weighted(t, add_bias(v[0], v[1]), w), {random_mat(r, c, rng), random_mat(1, c, rng)});
  NAVIG_OP("scale", weighted(t, scale(v[0], lit(v[0], -1.7)), w), {random_mat(r, c, rng)});
  NAVIG_OP("add_scalar", weighted(t, add_scalar(v[0], lit(v[0], 0.3)), w), {random_mat(r, c, rng)});
  NAVIG_OP("tanh", weighted(t, tanh(v[0]), w), {random_mat(r, c, rng, 2.0)});
  NAVIG_OP("sigmoid", weighted(t, sigmoid(v[0]), w), {random_mat(r, c, rng, 2.0)});
  NAVIG_OP("relu", weighted(t, relu(v[0]), w), {random_mat(r, c, rng, 2.0)});
  NAVIG_OP("exp", weighted(t, exp(v[0]), w), {random_mat(r, c, rng)});
  NAVIG_OP("square", weighted(t, square(v[0]), w), {random_mat(r, c, rng)});
  NAVIG_OP("minimum", weighted(t, minimum(v[0], v[1]), w), {random_mat(r, c, rng), random_mat(r, c, rng)});
  NAVIG_OP("clamp", weighted(t, clamp(v[0], lit(v[0], -0.5), lit(v[0], 0.5)), w), {random_mat(r, c, rng)});
  NAVIG_OP("softmax", weighted(t, softmax(v[0]), w), {random_mat(r, c, rng, 3.0)});
  NAVIG_OP("log_softmax", weighted(t, log_softmax(v[0]), w), {random_mat(r, c, rng, 3.0)});
  std::vector<int> target;
  for (Eigen::Index i = 0; i < r; ++i) target.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(c))));
  NAVIG_OP("cross_entropy", cross_entropy(v[0], target), {random_mat(r, c, rng, 3.0)});
  NAVIG_OP("pick", weighted(t, pick(v[0], target), w), {random_mat(r, c, rng)});
  NAVIG_OP("sum", sum(square(v[0])), {random_mat(r, c, rng)});
  NAVIG_OP("mean", mean(square(v[0])), {random_mat(r, c, rng)});
  NAVIG_OP("row_sum", weighted(t, row_sum(v[0]), w), {random_mat(r, c, rng)});
  NAVIG_OP("concat_cols", weighted(t, concat_cols<typename TapeScalar<std::decay_t<decltype(t)>>::type>({v[0], v[1]}), w),
           {random_mat(r, c, rng), random_mat(r, 2, rng)});
  NAVIG_OP("slice_cols", weighted(t, slice_cols(v[0], 1, c - 1), w), {random_mat(r, c, rng)});
  NAVIG_OP("slice_rows", weighted(t, slice_rows(v[0], r - 1, 1), w), {random_mat(r, c, rng)});
  NAVIG_OP("reshape", weighted(t, reshape(v[0], c, r), w), {random_mat(r, c, rng)});
  NAVIG_OP("embedding", weighted(t, embedding(v[0], {4, 0, 4, 2, 1}), w), {random_mat(5, c, rng)});
#undef NAVIG_OP
  record("gather_rows", op_check([&](auto& t, const auto& v, auto&) {
    using S = typename TapeScalar<std::decay_t<decltype(t)>>::type;
    const std::vector<RowRef<S>> refs{{v[0], 1}, {}, {v[1], 0}, {v[0], 2}};
    return weighted(t, gather_rows(t, refs, c), w);
  }, {random_mat(3, c, rng), random_mat(2, c, rng)}));
  const auto hdim = static_cast<Eigen::Index>(2 + rng.below(4));
  ParamStore<double> gs;
  Rng init(rng.next());
  make_gru(gs, "g", c, hdim, init);
  for (auto& q : gs.params()) q.value += random_mat(q.value.rows(), q.value.cols(), init, 0.3);
  record("gru_step", op_check([&](auto& t, const auto& v, auto& st) {
    using S = typename TapeScalar<std::decay_t<decltype(t)>>::type;
    const GruCell<S> cell{&st.get("g.w_gates"), &st.get("g.b_gates"), &st.get("g.w_cand"), &st.get("g.b_cand")};
    auto h = v[1];
    for (int k = 0; k < 3; ++k) h = gru_step(t, cell, v[0], h);
    return weighted(t, h, w);
  }, {random_mat(r, c, rng), random_mat(r, hdim, rng, 0.9)}, std::move(gs)));
  return worst;
}

const MapSet& small_maps() {
  static const MapSet maps = testing::generated_maps(300, 3);
  return maps;
}

const MapSet& small_val() {
  static const MapSet maps = testing::generated_maps(400, 1);
  return maps;
}

double full_loss_check(int k, std::string* label) {
  static const Preset presets[] = {Preset::kB, Preset::kC, Preset::kD, Preset::kE, Preset::kF, Preset::kG};
  static const ContinuityVariant conts[] = {ContinuityVariant::kZeroAtWaypoint, ContinuityVariant::kRestoreWaypoint,
                                            ContinuityVariant::kContinue};
  static const CommVariant comms[] = {CommVariant::kAsObservation, CommVariant::kCopyInit, CommVariant::kCopyExtend};
  Rng rng = Rng::derive(0x67726164, static_cast<std::uint64_t>(k));
  const Preset p = presets[k % 6];
  TrainConfig cfg = testing::tiny_config(p, conts[(k / 6) % 3], comms[(k / 18) % 3], 100 + static_cast<std::uint64_t>(k));
  cfg.dims.embed = 3 + static_cast<int>(rng.below(4));
  cfg.dims.goal = 2 + static_cast<int>(rng.below(3));
  cfg.dims.action = 2 + static_cast<int>(rng.below(3));
  cfg.dims.hidden = 3 + static_cast<int>(rng.below(4));
  cfg.dims.aux_extra = 1 + static_cast<int>(rng.below(3));
  cfg.envs = 2;
  cfg.rollout_length = 20;
  *label = std::string(1, preset_letter(p)) + "-" + std::string(continuity_name(cfg.continuity)) + "-" +
           std::string(comm_name(cfg.comm));
  Trainer trainer(cfg, &small_maps(), &small_val());
  std::vector<EnvBuffer> buffers = trainer.collect();
  trainer.bc_update(buffers, false);
  buffers = trainer.collect();
  std::vector<EnvBuffer*> bc;
  for (EnvBuffer& b : buffers)
    if (b.role == EnvRole::kBc) bc.push_back(&b);
  ad::ParamStore<double> store = trainer.store().cast<double>();
  for (auto& q : store.params())
    for (Eigen::Index i = 0; i < q.value.size(); ++i) q.value.data()[i] += rng.uniform(-0.05, 0.05);
  const PresetSpec spec = preset_spec(p, cfg.envs);
  auto loss = [&]<typename S>(Tape<S>& t, ad::ParamStore<S>& st) {
    const MainNet<S> main = MainNet<S>::bind(st, cfg.dims);
    std::optional<AuxNet<S>> aux;
    if (spec.mole) aux = AuxNet<S>::bind(st, cfg.dims, cfg.comm);
    const LossTerms<S> l = bc_losses(t, main, aux ? &*aux : nullptr, bc, spec.main_long, spec.main_short);
    return ad::add(l.nav, l.bc);
  };
  const auto stride = static_cast<Eigen::Index>(std::max<std::size_t>(1, store.parameter_count() / 150));
  return ad::grad_check_params_extended(loss, store, 1e-5, stride);
}

Outcome gradient_integrity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  double op_worst = 0.0, loss_worst = 0.0;
  std::string op_name, loss_name;
  for (int k = 0; k < 100; ++k) {
    std::string name;
    const double e = op_checks(rng, &name);
    if (e >= op_worst) {
      op_worst = e;
      op_name = name;
    }
    const double l = full_loss_check(k, &name);
    if (!(l < loss_worst)) {
      loss_worst = std::isnan(l) ? std::numeric_limits<double>::infinity() : l;
      loss_name = name;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {op_worst < 1e-4 && loss_worst < 1e-4 && secs < 120.0,
          "100 configs, worst op " + op_name + " " + fmt("%.2e", op_worst) + ", worst full loss (" + loss_name + ") " +
              fmt("%.2e", loss_worst) + ", tolerance 1e-4, " + fmt("%.1f s (limit 120 s)", secs)};
}

// ---------------------------------------------------------------------------

EpisodeResult result(bool success, double l, double l_star, double d_final = 0.0, double d_init = 1.0) {
  EpisodeResult r;
  r.success = success;
  r.path_length = l;
  r.shortest_length = l_star;
  r.final_geodesic = d_final;
  r.initial_geodesic = d_init;
  return r;
}

EgoMap ego_from(int size, const std::vector<std::pair<int, int>>& open) {
  EgoMap m;
  m.cells = EgoMap::Cells::Zero(size, size);
  for (const auto& [u, v] : open) m.cells(v, u) = 1;
  return m;
}

Outcome metric_identities() {
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) failed.push_back(what);
  };
  expect(spl_term(result(true, 10.0, 5.0)) == 0.5, "SPL 0.5 example");
  expect(spl_term(result(true, 5.0, 5.0)) == 1.0, "SPL optimal example");
  expect(soft_spl_term(result(false, 7.0, 5.0, 3.0, 3.0)) == 0.0, "Soft-SPL no-progress example");
  const EgoMap gt = ego_from(7, {{0, 0}, {1, 0}, {2, 0}, {3, 0}});
  expect(iou(gt, gt) == 1.0, "IoU identity");
  expect(iou(ego_from(7, {{5, 5}, {6, 6}}), gt) == 0.0, "IoU disjoint");
  expect(iou(ego_from(7, {{0, 0}, {1, 0}}), gt) == 0.5, "IoU half");
  Rng rng(4);
  EgoMap open;
  open.cells = EgoMap::Cells::Ones(9, 9);
  expect(sym_spl(open, open, 10, rng) == 1.0, "Sym-SPL identity");
  expect(sym_spl(ego_from(9, {{4, 4}}), open, 10, rng) == 0.0, "Sym-SPL blocked prediction");
  expect(std::abs(sym_spl_score({8.0, 1, 1, 1, 1, 1, 1, 1, 1, 1}, {10.0, 1, 1, 1, 1, 1, 1, 1, 1, 1}) - 0.98) < 1e-15,
         "Sym-SPL 0.98 example");

  int identity_maps = 0;
  for (int k = 0; identity_maps < 100; ++k) {
    const MapEntry& m = small_maps()[static_cast<std::size_t>(k) % small_maps().size()];
    Rng pr(static_cast<std::uint64_t>(k));
    const LongEpisode ep = sample_long_episode(m.traversability, m.id, pr);
    SeenMask seen(m.grid);
    seen.cells().setOnes();
    const EgoMap map = render_ego_gt(m.grid, ep.start, seen);
    int used = 0;
    const double s = sym_spl(map, map, 10, pr, &used);
    if (used < 10) continue;
    ++identity_maps;
    if (s != 1.0) {
      failed.push_back("sym_spl(M,M) != 1");
      break;
    }
  }
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<EpisodeResult> rs;
    const int n = 1 + static_cast<int>(rng.below(30));
    for (int i = 0; i < n; ++i)
      rs.push_back(result(rng.uniform() < 0.5, rng.uniform(0.0, 20.0), rng.uniform(0.0, 10.0), rng.uniform(0.0, 12.0),
                          rng.uniform(0.0, 10.0)));
    const Aggregate a = aggregate(rs);
    if (!(a.soft_spl >= a.spl && a.spl <= a.success)) {
      failed.push_back("Soft-SPL >= SPL on fuzzed set " + std::to_string(trial));
      break;
    }
  }
  std::string detail = "worked examples, sym_spl(M,M)=1 on 100 rendered maps, 1000 fuzzed result sets";
  if (!failed.empty()) detail = "failed: " + failed.front();
  return {failed.empty(), detail};
}

// ---------------------------------------------------------------------------

Outcome mining_soundness() {
  const MiningConfig mining;
  int subgoals = 0, bad = 0, episodes = 0;
  for (std::uint64_t m = 0; subgoals < 10000; ++m) {
    const MapEntry map = make_map_entry("mine", generate_map(8000 + m));
    Rng rng(m);
    for (int e = 0; e < 5 && subgoals < 10000; ++e) {
      LongEpisode ep;
      try {
        ep = sample_long_episode(map.traversability, map.id, rng, {}, mining.waypoint_spacing);
      } catch (const SamplingError&) {
        continue;
      }
      mine_episode(map.traversability, ep, mining);
      ++episodes;
      for (const Waypoint& w : ep.waypoints) {
        const std::vector<double> oracle =
            testing::bellman_ford(map.grid, map.traversability->clearance(), map.grid.cell_of(w.position));
        for (const Subgoal& s : w.subgoals) {
          ++subgoals;
          const double dg = oracle[static_cast<std::size_t>(map.grid.linear_index(map.grid.cell_of(s.position)))];
          const double de = (s.position - w.position).norm();
          const bool ok = std::isfinite(dg) && dg == s.d_geodesic && de == s.d_euclid && de >= 3.0 && de <= 5.0 &&
                          dg >= 1.5 * de;
          if (!ok) ++bad;
        }
      }
    }
  }
  return {bad == 0, std::to_string(subgoals - bad) + "/" + std::to_string(subgoals) + " subgoals sound over " +
                        std::to_string(episodes) + " episodes"};
}

// ---------------------------------------------------------------------------

Outcome blindness_invariance() {
  int identical = 0, changed_r = 0, trials = 0;
  std::uint64_t ep_seed = 0;
  const ContinuityVariant conts[] = {ContinuityVariant::kZeroAtWaypoint, ContinuityVariant::kRestoreWaypoint,
                                     ContinuityVariant::kContinue};
  const CommVariant comms[] = {CommVariant::kAsObservation, CommVariant::kCopyInit, CommVariant::kCopyExtend};
  MiningConfig mining;
  mining.subgoals_per_waypoint = 3;
  while (trials < 100) {
    const int k = trials;
    Rng rng = Rng::derive(0x626c696e64, static_cast<std::uint64_t>(k));
    AgentDims dims;
    dims.hidden = 32;
    dims.embed = 32;
    dims.aux_extra = 16;
    ad::ParamStore<float> store;
    const MainNet<float> main = MainNet<float>::create(store, dims, rng);
    const AuxNet<float> aux = AuxNet<float>::create(store, dims, comms[k % 3], rng);
    const MapEntry& map = small_maps()[static_cast<std::size_t>(k) % small_maps().size()];
    Rng er(ep_seed++);
    LongEpisode ep;
    try {
      ep = sample_long_episode(map.traversability, map.id, er, {}, mining.waypoint_spacing);
    } catch (const SamplingError&) {
      continue;
    }
    mine_episode(map.traversability, ep, mining);
    if (ep.waypoints.empty() || ep.waypoints.front().subgoals.empty()) continue;
    ++trials;
    const ContinuityVariant cont = conts[(k / 3) % 3];
    const MoleRollout clean = mole_closed_loop(main, aux, map, ep, 0, cont, {});
    Rng scramble(rng.next());
    const MoleRollout noisy = mole_closed_loop(main, aux, map, ep, 0, cont, [&](Observation& o) {
      for (Eigen::Index i = 0; i < o.ranges.size(); ++i) o.ranges[i] = scramble.uniform(0.0, 5.0);
      o.goal.distance = scramble.uniform(0.0, 10.0);
      o.goal.bearing = scramble.uniform(-3.0, 3.0);
      o.prev_collided = scramble.uniform() < 0.5;
    });
    if (clean.actions == noisy.actions) ++identical;
    if (!(clean.representation.array() == noisy.representation.array()).all()) ++changed_r;
  }
  return {identical == trials && changed_r > 0,
          std::to_string(identical) + "/" + std::to_string(trials) + " mole action sequences identical; main state changed in " +
              std::to_string(changed_r) + " runs"};
}

// ---------------------------------------------------------------------------

Outcome continuity_semantics() {
  std::ostringstream detail;
  bool pass = true;
  for (ContinuityVariant v :
       {ContinuityVariant::kZeroAtWaypoint, ContinuityVariant::kRestoreWaypoint, ContinuityVariant::kContinue}) {
    TrainConfig cfg = testing::tiny_config(Preset::kC, v);
    Trainer trainer(cfg, &small_maps(), &small_val());
    int buffers = 0, zeroed = 0, restored = 0, saves = 0, slots = 0;
    std::string error;
    while (buffers < 20) {
      std::vector<EnvBuffer> bs = trainer.collect();
      trainer.bc_update(bs, false);
      for (const EnvBuffer& b : bs) {
        const testing::ContinuityReport rep = testing::check_continuity(b, v);
        if (error.empty() && !rep.error.empty()) error = rep.error;
        zeroed += rep.zeroed;
        restored += rep.restored;
        saves += rep.saves;
        slots += rep.main_slots;
        ++buffers;
      }
    }
    bool ok = error.empty() && saves > 0;
    if (v == ContinuityVariant::kZeroAtWaypoint) ok = ok && zeroed > 0 && restored == 0;
    if (v == ContinuityVariant::kRestoreWaypoint) ok = ok && restored > 0 && zeroed == 0;
    if (v == ContinuityVariant::kContinue) ok = ok && zeroed == 0 && restored == 0;
    pass = pass && ok;
    detail << continuity_name(v) << ": " << buffers << " buffers, " << slots << " states, " << zeroed << " zeroed, "
           << restored << " restored" << (error.empty() ? "" : ", " + error) << "; ";
  }
  return {pass, detail.str()};
}

// ---------------------------------------------------------------------------

RunConfig small_run_config() {
  RunConfig c;
  c.maps.train = 3;
  c.maps.val = 1;
  c.maps.test = 3;
  c.episodes.test_per_map = 8;
  c.episodes.probe_per_map = 1;
  c.episodes.mined_per_map = 1;
  c.train = testing::tiny_config(Preset::kE);
  c.train.rollout_length = 32;
  c.train.phase1_steps = 4 * 32 * 4;
  c.train.phase2_steps = 4 * 32 * 4;
  c.resolve();
  return c;
}

Outcome zero_noise_equivalence(const fs::path& root) {
  const Workspace ws(root / "zero_noise");
  fs::remove_all(ws.root());
  RunConfig c = small_run_config();
  gen_maps(c, ws);
  gen_episodes(c, ws);
  train_run(c, ws);
  c.eval.noisy = NoiseConfig{0.0, 0.0, 0.0};
  const nlohmann::json m = eval_run(c, ws, true, true);
  const fs::path dir = ws.run_dir(run_tag(c));
  const std::string clean = read_file(dir / "eval_clean.csv"), noisy = read_file(dir / "eval_noisy.csv");
  c.eval.noisy = noisy_eval_config();
  eval_run(c, ws, false, true);
  const bool differs = read_file(dir / "eval_noisy.csv") != clean;
  return {clean == noisy && differs,
          std::string(clean == noisy ? "zero-intensity CSV bit-identical to clean" : "CSV differs") + " (" +
              std::to_string(m.at("metrics").at("clean").at("episodes").get<int>()) + " episodes); nonzero noise " +
              (differs ? "changes it" : "does not change it")};
}

// ---------------------------------------------------------------------------

struct RunScores {
  double clean = 0.0;
  double noisy = 0.0;
};

std::map<char, std::vector<RunScores>> g_table;
std::vector<RunConfig> g_e_runs;
double g_train_cpu = 0.0;

RunConfig desk_config(Preset p, std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.train.preset = p;
  c.resolve();
  return c;
}

Workspace desk_workspace(const fs::path& root) {
  const Workspace ws(root / "desk");
  if (!fs::exists(ws.maps_dir() / "index.json")) {
    const RunConfig c = desk_config(Preset::kE, 1);
    gen_maps(c, ws);
    gen_episodes(c, ws);
  }
  return ws;
}

Outcome table_direction(const fs::path& root) {
  fs::remove_all(root / "desk");
  const double cpu0 = cpu_seconds();
  const Workspace ws = desk_workspace(root);
  g_table.clear();
  g_e_runs.clear();
  for (const char letter : {'a', 'b', 'e'})
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const RunConfig c = desk_config(parse_preset(std::string(1, letter)), seed);
      train_run(c, ws);
      const nlohmann::json m = eval_run(c, ws, true, true).at("metrics");
      g_table[letter].push_back({m.at("clean").at("success").get<double>(), m.at("noisy").at("success").get<double>()});
      if (letter == 'e') g_e_runs.push_back(c);
      std::cout << "    " << run_tag(c) << ": clean " << fmt("%.4f", g_table[letter].back().clean) << " noisy "
                << fmt("%.4f", g_table[letter].back().noisy) << std::endl;
    }
  write_report(ws);
  g_train_cpu = cpu_seconds() - cpu0;
  auto mean = [](char l, bool noisy) {
    double s = 0.0;
    for (const RunScores& r : g_table[l]) s += noisy ? r.noisy : r.clean;
    return s / static_cast<double>(g_table[l].size());
  };
  const double ea = mean('e', true), eb = mean('b', true), a = mean('a', true);
  const double drop_e = mean('e', false) - ea, drop_a = mean('a', false) - a;
  const bool ok = ea >= eb && ea >= a && drop_e <= drop_a && g_train_cpu <= 8.0 * 3600.0;
  return {ok, "noisy Success e " + fmt("%.4f", ea) + " b " + fmt("%.4f", eb) + " a " + fmt("%.4f", a) +
                  "; drop e " + fmt("%.4f", drop_e) + " a " + fmt("%.4f", drop_a) + "; " +
                  fmt("%.2f CPU-h (limit 8)", g_train_cpu / 3600.0)};
}

Outcome probing_direction(const fs::path& root) {
  const double cpu0 = cpu_seconds();
  const Workspace ws = desk_workspace(root);
  if (g_e_runs.empty())
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const RunConfig c = desk_config(Preset::kE, seed);
      train_run(c, ws);
      g_e_runs.push_back(c);
    }
  const double probe_cpu0 = cpu_seconds();
  double trained = 0.0, random = 0.0;
  for (const RunConfig& c : g_e_runs) {
    const nlohmann::json m = probe_run(c, ws).at("metrics");
    trained += m.at("trained").at("sym_spl").get<double>();
    random += m.at("random").at("sym_spl").get<double>();
    std::cout << "    " << run_tag(c) << ": probe Sym-SPL trained " << fmt("%.4f", m["trained"]["sym_spl"].get<double>())
              << " random " << fmt("%.4f", m["random"]["sym_spl"].get<double>()) << std::endl;
  }
  write_report(ws);
  trained /= static_cast<double>(g_e_runs.size());
  random /= static_cast<double>(g_e_runs.size());
  const double probe_cpu = cpu_seconds() - probe_cpu0;
  (void)cpu0;
  return {trained > random && probe_cpu < 3600.0,
          "mean Sym-SPL trained " + fmt("%.4f", trained) + " vs random " + fmt("%.4f", random) + ", " +
              fmt("%.2f CPU-h probing (limit 1)", probe_cpu / 3600.0)};
}

// ---------------------------------------------------------------------------

Outcome exposure_accounting() {
  TrainConfig cfg;
  cfg.preset = Preset::kD;
  const MapSet maps = testing::generated_maps(500, 8);
  Trainer trainer(cfg, &maps, &small_val());
  std::int64_t longs = 0, total = 0;
  for (int it = 0; it < 10; ++it) {
    std::vector<EnvBuffer> buffers = trainer.collect();
    for (const EnvBuffer& b : buffers) {
      longs += b.count(SegmentKind::kLong);
      total += b.length();
    }
    trainer.bc_update(buffers);
    trainer.ppo_update(buffers);
  }
  return {trainer.encoder_rows() == longs,
          "encoder rows " + std::to_string(trainer.encoder_rows()) + ", long slots " + std::to_string(longs) + " of " +
              std::to_string(total) + " (" + fmt("%.1f%% of observations", 100.0 * longs / total) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  const char* ws_env = std::getenv("NAVIG_ACCEPT_WS");
  const fs::path root = ws_env ? fs::path(ws_env) : fs::path("acceptance_ws");
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "oracle equivalence", oracle_equivalence},
      {2, "expert competence", expert_competence},
      {3, "gradient integrity", gradient_integrity},
      {4, "metric identities", metric_identities},
      {5, "mining soundness", mining_soundness},
      {6, "blindness invariance", blindness_invariance},
      {7, "continuity semantics", continuity_semantics},
      {8, "zero-noise equivalence", [&] { return zero_noise_equivalence(root); }},
      {9, "directional table reproduction", [&] { return table_direction(root); }},
      {10, "probing direction", [&] { return probing_direction(root); }},
      {11, "visual-exposure accounting", exposure_accounting},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const Criterion& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
              << fmt("%.1f s", secs) << "]" << std::endl;
  }
  std::cout << (failures == 0 ? "all selected criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
