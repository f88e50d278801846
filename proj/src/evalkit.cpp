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

#include "navig/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "navig/errors.hpp"
#include "navig/io_util.hpp"
#include "navig/map_io.hpp"
#include "navig/training.hpp"

namespace navig {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

EpisodeResult score_episode(const Trajectory& trajectory, const LongEpisode& episode, const DistanceField& goal_field,
                            double success_radius) {
  if (trajectory.poses.empty()) throw std::invalid_argument("score_episode: empty trajectory");
  EpisodeResult r;
  r.map_id = episode.map_id;
  for (std::size_t i = 1; i < trajectory.poses.size(); ++i)
    r.path_length += (trajectory.poses[i].position() - trajectory.poses[i - 1].position()).norm();
  r.shortest_length = episode.gt_path_length;
  r.steps = static_cast<int>(trajectory.poses.size()) - 1;
  const Eigen::Vector2d last = trajectory.poses.back().position();
  r.final_geodesic = geodesic_distance(goal_field, last);
  r.initial_geodesic = geodesic_distance(goal_field, trajectory.poses.front().position());
  r.success = trajectory.stopped && (last - episode.goal).norm() <= success_radius;
  return r;
}

double spl_term(const EpisodeResult& r) {
  if (!r.success) return 0.0;
  const double denom = std::max(r.path_length, r.shortest_length);
  return denom > 0.0 ? r.shortest_length / denom : 1.0;
}

double soft_spl_term(const EpisodeResult& r) {
  double soft = 1.0;
  if (!r.success) {
    soft = r.initial_geodesic > 0.0 && std::isfinite(r.final_geodesic)
               ? std::max(0.0, 1.0 - r.final_geodesic / r.initial_geodesic)
               : 0.0;
  }
  const double denom = std::max(r.path_length, r.shortest_length);
  return denom > 0.0 ? soft * r.shortest_length / denom : soft;
}

Aggregate aggregate(const std::vector<EpisodeResult>& results) {
  Aggregate a;
  a.episodes = static_cast<int>(results.size());
  if (results.empty()) return a;
  for (const EpisodeResult& r : results) {
    a.success += r.success ? 1.0 : 0.0;
    a.spl += spl_term(r);
    a.soft_spl += soft_spl_term(r);
    a.mean_steps += r.steps;
  }
  const double n = static_cast<double>(results.size());
  a.success /= n;
  a.spl /= n;
  a.soft_spl /= n;
  a.mean_steps /= n;
  return a;
}

NoiseConfig noisy_eval_config() {
  NoiseConfig n;
  n.obs_sigma = 0.1;
  n.range_trunc = 4.0;
  n.act_noise_intensity = 0.5;
  return n;
}

std::vector<EpisodeResult> evaluate_policy(const MainNet<float>& net, const MapSet& maps,
                                           const std::vector<LongEpisode>& episodes, const EvalOptions& options) {
  options.noise.validate();
  struct Run {
    const MapEntry* map = nullptr;
    DistanceField field;
    Trajectory traj;
    Pose pose;
    Rng noise, act;
    int prev = kStartToken;
    bool collided = false;
    bool done = false;
    Eigen::RowVectorXf h;
  };
  const int H = net.dims.hidden;
  const int F = net.dims.obs_features();
  std::vector<Run> runs(episodes.size());
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    Run& run = runs[i];
    run.map = &find_map(maps, episodes[i].map_id);
    run.field = distance_field(run.map->traversability, episodes[i].goal);
    run.pose = episodes[i].start;
    run.traj.poses.push_back(run.pose);
    run.noise = Rng::derive(options.seed, 2 * i);
    run.act = Rng::derive(options.seed, 2 * i + 1);
    run.h = Eigen::RowVectorXf::Zero(H);
  }
  for (;;) {
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < runs.size(); ++i)
      if (!runs[i].done) live.push_back(i);
    if (live.empty()) break;
    const int n = static_cast<int>(live.size());
    ad::Mat<float> obs(n, F), goal(n, 3), h(n, H);
    std::vector<int> prev(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      Run& run = runs[live[k]];
      const Observation o = observe(run.map->grid, run.pose, episodes[live[k]].goal, options.sensor, options.noise,
                                    run.noise, nullptr, run.collided);
      obs.row(k) = obs_features(o, options.sensor);
      goal.row(k) = goal_features(o.goal);
      prev[k] = run.prev;
      h.row(k) = run.h;
    }
    ad::Tape<float> t(false);
    const MainStep<float> st = main_step(t, net, obs, goal, prev, t.constant(h));
    if (!st.logits.value().allFinite()) throw NumericalError("evaluate_policy: non-finite logits");
    for (int k = 0; k < n; ++k) {
      Run& run = runs[live[k]];
      run.h = st.r.value().row(k);
      const int a = options.greedy ? argmax_row(st.logits.value().row(k)) : sample_row(st.logits.value().row(k), run.act);
      const StepResult s =
          step(run.map->grid, run.pose, static_cast<Action>(a), options.noise, run.noise, options.kinematics);
      run.pose = s.pose;
      run.collided = s.collided;
      run.prev = a;
      run.traj.poses.push_back(run.pose);
      if (a == static_cast<int>(Action::kStop)) {
        run.traj.stopped = true;
        run.done = true;
      } else if (static_cast<int>(run.traj.poses.size()) - 1 >= options.max_steps) {
        run.done = true;
      }
    }
  }
  std::vector<EpisodeResult> out;
  out.reserve(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    EpisodeResult r = score_episode(runs[i].traj, episodes[i], runs[i].field);
    r.episode = static_cast<int>(i);
    out.push_back(r);
  }
  return out;
}

std::string results_csv(const std::vector<EpisodeResult>& results) {
  std::ostringstream out;
  out << std::setprecision(9);
  out << "map_id,episode,success,spl,soft_spl,path_length,shortest_length,steps,final_geodesic,initial_geodesic\n";
  for (const EpisodeResult& r : results)
    out << r.map_id << ',' << r.episode << ',' << (r.success ? 1 : 0) << ',' << spl_term(r) << ','
        << soft_spl_term(r) << ',' << r.path_length << ',' << r.shortest_length << ',' << r.steps << ','
        << r.final_geodesic << ',' << r.initial_geodesic << '\n';
  const Aggregate a = aggregate(results);
  out << "aggregate," << a.episodes << ',' << a.success << ',' << a.spl << ',' << a.soft_spl << ",,," << a.mean_steps
      << ",,\n";
  return out.str();
}

void write_results_csv(const std::filesystem::path& path, const std::vector<EpisodeResult>& results) {
  write_file_atomic(path, results_csv(results));
}

Eigen::Vector2d ego_cell_world(const Pose& pose, int u, int v, int size, double cell_size) {
  const int c = size / 2;
  const double forward = (c - v) * cell_size;
  const double left = (c - u) * cell_size;
  const double ch = std::cos(pose.heading), sh = std::sin(pose.heading);
  return pose.position() + forward * Eigen::Vector2d(ch, sh) + left * Eigen::Vector2d(-sh, ch);
}

EgoMap render_ego_gt(const OccupancyGrid& grid, const Pose& pose, const SeenMask& seen, int size, double cell_size) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("render_ego_gt: size must be odd and positive");
  EgoMap m;
  m.cell_size = cell_size;
  m.cells = EgoMap::Cells::Zero(size, size);
  for (int v = 0; v < size; ++v)
    for (int u = 0; u < size; ++u) {
      const CellIndex c = grid.cell_of(ego_cell_world(pose, u, v, size, cell_size));
      m.cells(v, u) = grid.navigable(c) && seen.seen(c.x(), c.y()) ? 1 : 0;
    }
  return m;
}

double iou(const EgoMap& pred, const EgoMap& gt) {
  if (pred.cells.rows() != gt.cells.rows() || pred.cells.cols() != gt.cells.cols())
    throw std::invalid_argument("iou: map sizes differ");
  const auto p = pred.cells != 0;
  const auto g = gt.cells != 0;
  const auto inter = (p && g).count();
  const auto uni = (p || g).count();
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double sym_spl_score(const std::vector<double>& pred, const std::vector<double>& gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("sym_spl_score: length mismatch");
  if (gt.empty()) return 1.0;
  double total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double l = pred[i], ls = gt[i];
    if (!std::isfinite(l) || !(l > 0.0) || !(ls > 0.0)) continue;
    total += std::min(l / ls, ls / l);
  }
  return total / static_cast<double>(gt.size());
}

namespace {

OccupancyGrid ego_grid(const EgoMap& m) {
  OccupancyGrid g(m.size(), m.size(), m.cell_size);
  for (int v = 0; v < m.size(); ++v)
    for (int u = 0; u < m.size(); ++u) g.set_navigable(u, v, m.navigable(u, v));
  return g;
}

}  // namespace

double sym_spl(const EgoMap& pred, const EgoMap& gt, int n, Rng& rng, int* used) {
  if (pred.size() != gt.size()) throw std::invalid_argument("sym_spl: map sizes differ");
  const int c = gt.center();
  if (!gt.navigable(c, c)) throw std::invalid_argument("sym_spl: ground-truth centre is not navigable");
  const OccupancyGrid gg = ego_grid(gt);
  const Eigen::Vector2d centre = gg.center_of({c, c});
  const DistanceField gf = distance_field(gg, centre, 0.0);
  std::vector<CellIndex> reachable;
  for (int v = 0; v < gt.size(); ++v)
    for (int u = 0; u < gt.size(); ++u)
      if ((u != c || v != c) && gf.reachable({u, v})) reachable.push_back({u, v});
  const int k = std::min<int>(n, static_cast<int>(reachable.size()));
  for (int i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(reachable.size() - i));
    std::swap(reachable[i], reachable[j]);
  }
  if (used) *used = k;
  std::vector<double> lp(static_cast<std::size_t>(k), kInf), lg(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) lg[i] = gf.at(reachable[i]);
  if (pred.navigable(c, c)) {
    const DistanceField pf = distance_field(ego_grid(pred), centre, 0.0);
    for (int i = 0; i < k; ++i) lp[i] = pf.at(reachable[i]);
  }
  return sym_spl_score(lp, lg);
}

EgoMap ProbeDataset::map(int i) const {
  EgoMap m;
  m.cell_size = cell_size;
  m.cells = EgoMap::Cells::Zero(map_size, map_size);
  for (int v = 0; v < map_size; ++v)
    for (int u = 0; u < map_size; ++u) m.cells(v, u) = maps(i, v * map_size + u);
  return m;
}

void check_disjoint(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::set<std::string> sa(a.begin(), a.end());
  for (const std::string& id : b)
    if (sa.count(id)) throw std::invalid_argument("map '" + id + "' appears in two splits");
}

ProbeDataset collect_probe_dataset(const MainNet<float>& net, const MapSet& maps,
                                   const std::vector<LongEpisode>& episodes, int samples_per_episode, int map_size,
                                   double cell_size, const SensorConfig& sensor) {
  if (samples_per_episode < 1) throw std::invalid_argument("collect_probe_dataset: samples_per_episode must be >= 1");
  const int H = net.dims.hidden;
  const int W2 = map_size * map_size;
  const Kinematics kin;
  MainNet<float> enc = net;
  enc.encoder_rows = nullptr;
  ProbeDataset d;
  d.map_size = map_size;
  d.cell_size = cell_size;
  const int total = samples_per_episode * static_cast<int>(episodes.size());
  d.representations.resize(total, H);
  d.maps.resize(total, W2);
  int row = 0;
  for (const LongEpisode& ep : episodes) {
    const MapEntry& m = find_map(maps, ep.map_id);
    const DistanceField field = distance_field(m.traversability, ep.goal);
    Rng noise(0);
    SeenMask seen(m.grid);
    Pose pose = ep.start;
    bool collided = false;
    int prev = kStartToken;
    ad::Mat<float> r = ad::Mat<float>::Zero(1, H);
    std::vector<Eigen::RowVectorXf> reps;
    std::vector<EgoMap> egos;
    for (int k = 0; k < 500; ++k) {
      const Observation o = observe(m.grid, pose, ep.goal, sensor, NoiseConfig{}, noise, &seen, collided);
      mark_footprint(seen, m.grid, pose.position(), kin.agent_radius);
      ad::Tape<float> t(false);
      const MainStep<float> st = main_step(t, enc, ad::Mat<float>(obs_features(o, sensor)),
                                           ad::Mat<float>(goal_features(o.goal)), {prev}, t.constant(r));
      r = st.r.value();
      reps.push_back(r.row(0));
      egos.push_back(render_ego_gt(m.grid, pose, seen, map_size, cell_size));
      Action a = Action::kStop;
      try {
        a = expert_action(m.grid, pose, ep.goal, field, kSuccessRadius, kin);
      } catch (const UnreachableError&) {
      }
      if (a == Action::kStop) break;
      const StepResult s = step(m.grid, pose, a, NoiseConfig{}, noise, kin);
      pose = s.pose;
      collided = s.collided;
      prev = static_cast<int>(a);
    }
    const std::size_t T = reps.size();
    for (int i = 0; i < samples_per_episode; ++i) {
      const std::size_t k = static_cast<std::size_t>(i) * T / static_cast<std::size_t>(samples_per_episode);
      d.representations.row(row) = reps[k];
      for (int v = 0; v < map_size; ++v)
        for (int u = 0; u < map_size; ++u) d.maps(row, v * map_size + u) = egos[k].cells(v, u);
      d.map_ids.push_back(ep.map_id);
      ++row;
    }
  }
  return d;
}

Probe make_probe(int input, int map_size, double cell_size, const ProbeConfig& config) {
  Probe p;
  p.input = input;
  p.map_size = map_size;
  p.cell_size = cell_size;
  p.channels = config.channels;
  Rng rng = Rng::derive(config.seed, 0x70726f);
  ad::make_dense(p.store, "probe.l1", input, config.hidden, rng);
  ad::make_dense(p.store, "probe.l2", config.hidden, map_size * map_size * config.channels, rng);
  ad::make_dense(p.store, "probe.proj", config.channels + 2, 2, rng);
  return p;
}

ad::Var<float> Probe::logits(ad::Tape<float>& t, const ad::Mat<float>& r) const {
  auto& s = const_cast<ad::ParamStore<float>&>(store);
  auto dense = [&](const std::string& name) {
    return ad::DenseLayer<float>{&s.get(name + ".w"), &s.get(name + ".b")};
  };
  const Eigen::Index B = r.rows();
  const Eigen::Index W2 = static_cast<Eigen::Index>(map_size) * map_size;
  const ad::Var<float> h = ad::relu(dense("probe.l1")(t, t.constant(r)));
  const ad::Var<float> z = ad::reshape(dense("probe.l2")(t, h), B * W2, channels);
  ad::Mat<float> coords(B * W2, 2);
  const float half = static_cast<float>(map_size - 1) / 2.0f;
  for (Eigen::Index b = 0; b < B; ++b)
    for (int v = 0; v < map_size; ++v)
      for (int u = 0; u < map_size; ++u) {
        const Eigen::Index i = b * W2 + v * map_size + u;
        coords(i, 0) = half > 0 ? (u - half) / half : 0.0f;
        coords(i, 1) = half > 0 ? (v - half) / half : 0.0f;
      }
  return dense("probe.proj")(t, ad::concat_cols<float>({z, t.constant(std::move(coords))}));
}

EgoMap Probe::predict(const Eigen::Ref<const Eigen::RowVectorXf>& r) const {
  ad::Tape<float> t(false);
  const ad::Var<float> l = logits(t, ad::Mat<float>(r));
  EgoMap m;
  m.cell_size = cell_size;
  m.cells = EgoMap::Cells::Zero(map_size, map_size);
  for (int v = 0; v < map_size; ++v)
    for (int u = 0; u < map_size; ++u) {
      const Eigen::Index i = v * map_size + u;
      m.cells(v, u) = l.value()(i, 1) > l.value()(i, 0) ? 1 : 0;
    }
  return m;
}

namespace {

std::vector<int> cell_targets(const ProbeDataset& d, const std::vector<int>& rows) {
  const int W2 = d.map_size * d.map_size;
  std::vector<int> out;
  out.reserve(rows.size() * static_cast<std::size_t>(W2));
  for (int r : rows)
    for (int c = 0; c < W2; ++c) out.push_back(d.maps(r, c));
  return out;
}

ad::Mat<float> gather(const ad::Mat<float>& m, const std::vector<int>& rows) {
  ad::Mat<float> out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

void check_dataset(const Probe& p, const ProbeDataset& d, const char* what) {
  if (d.size() == 0) throw std::invalid_argument(std::string(what) + ": empty dataset");
  if (d.representations.cols() != p.input || d.map_size != p.map_size)
    throw std::invalid_argument(std::string(what) + ": dataset does not match the probe shape");
}

}  // namespace

double probe_loss(const Probe& probe, const ProbeDataset& data) {
  check_dataset(probe, data, "probe_loss");
  double total = 0.0;
  constexpr int kChunk = 128;
  for (int begin = 0; begin < data.size(); begin += kChunk) {
    std::vector<int> rows;
    for (int i = begin; i < std::min(begin + kChunk, data.size()); ++i) rows.push_back(i);
    ad::Tape<float> t(false);
    const ad::Var<float> l = ad::cross_entropy(probe.logits(t, gather(data.representations, rows)), cell_targets(data, rows));
    total += static_cast<double>(l.scalar()) * static_cast<double>(rows.size());
  }
  return total / data.size();
}

Probe train_probe(const ProbeDataset& train, const ProbeDataset& val, const ProbeConfig& config, ProbeReport* report) {
  if (train.size() == 0) throw std::invalid_argument("train_probe: empty dataset");
  Probe probe = make_probe(static_cast<int>(train.representations.cols()), train.map_size, train.cell_size, config);
  check_dataset(probe, train, "train_probe");
  const ProbeDataset& v = val.size() > 0 ? val : train;
  check_dataset(probe, v, "train_probe");
  ad::OptimConfig opt;
  opt.lr = config.lr;
  opt.weight_decay = config.weight_decay;
  Rng rng = Rng::derive(config.seed, 1);
  std::vector<int> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);
  ProbeReport rep;
  rep.best_val_loss = probe_loss(probe, v);
  ad::ParamStore<float> best = probe.store;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch)) {
      const std::vector<int> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                  order.begin() + static_cast<std::ptrdiff_t>(
                                                      std::min(order.size(), begin + static_cast<std::size_t>(config.batch))));
      ad::Tape<float> t;
      const ad::Var<float> l =
          ad::cross_entropy(probe.logits(t, gather(train.representations, rows)), cell_targets(train, rows));
      if (!std::isfinite(l.scalar())) throw NumericalError("train_probe: non-finite loss");
      t.backward(l);
      ad::adamw_step(probe.store, opt);
      sum += static_cast<double>(l.scalar()) * static_cast<double>(rows.size());
    }
    rep.train_loss.push_back(sum / train.size());
    const double vl = probe_loss(probe, v);
    rep.val_loss.push_back(vl);
    if (vl < rep.best_val_loss || rep.best_epoch < 0) {
      rep.best_val_loss = vl;
      rep.best_epoch = epoch;
      best = probe.store;
    } else if (epoch - rep.best_epoch >= config.patience) {
      break;
    }
  }
  probe.store.assign_values(best);
  if (report) *report = rep;
  return probe;
}

ProbeScores score_probe(const Probe& probe, const ProbeDataset& test, int sym_points, std::uint64_t seed) {
  check_dataset(probe, test, "score_probe");
  ProbeScores s;
  for (int i = 0; i < test.size(); ++i) {
    const EgoMap gt = test.map(i);
    const EgoMap pred = probe.predict(test.representations.row(i));
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
    s.iou += iou(pred, gt);
    s.sym_spl += sym_spl(pred, gt, sym_points, rng);
  }
  s.samples = test.size();
  s.iou /= test.size();
  s.sym_spl /= test.size();
  return s;
}

std::string ego_pgm(const EgoMap& map) { return encode_pgm(map.cells); }

}  // namespace navig
