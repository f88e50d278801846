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

#ifndef NAVIG_EVALKIT_HPP
#define NAVIG_EVALKIT_HPP

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "navig/agents.hpp"
#include "navig/autodiff.hpp"
#include "navig/episodes.hpp"
#include "navig/geodesy.hpp"
#include "navig/world.hpp"

namespace navig {

struct MapEntry;
using MapSet = std::vector<MapEntry>;

struct EpisodeResult {
  std::string map_id;
  int episode = 0;
  bool success = false;
  double path_length = 0.0;      // l
  double shortest_length = 0.0;  // l*
  int steps = 0;
  double final_geodesic = 0.0;
  double initial_geodesic = 0.0;
};

struct Trajectory {
  std::vector<Pose> poses;  // including the start pose
  bool stopped = false;     // last action was STOP
};

/// Scores one trajectory against its episode. Throws std::invalid_argument on
/// an empty trajectory.
EpisodeResult score_episode(const Trajectory& trajectory, const LongEpisode& episode, const DistanceField& goal_field,
                            double success_radius = kSuccessRadius);

double spl_term(const EpisodeResult& r);
double soft_spl_term(const EpisodeResult& r);

struct Aggregate {
  int episodes = 0;
  double success = 0.0;
  double spl = 0.0;
  double soft_spl = 0.0;
  double mean_steps = 0.0;
};

Aggregate aggregate(const std::vector<EpisodeResult>& results);

struct EvalOptions {
  NoiseConfig noise;
  SensorConfig sensor;
  Kinematics kinematics;
  int max_steps = 500;
  bool greedy = false;
  std::uint64_t seed = 0;
};

/// Noise used by the noisy evaluation condition.
NoiseConfig noisy_eval_config();

/// Runs the main policy on every episode. Episodes are stepped in lockstep
/// batches; each episode draws noise and actions from its own streams, so
/// results do not depend on the batch composition.
std::vector<EpisodeResult> evaluate_policy(const MainNet<float>& net, const MapSet& maps,
                                           const std::vector<LongEpisode>& episodes, const EvalOptions& options);

/// One row per episode followed by an aggregate row.
std::string results_csv(const std::vector<EpisodeResult>& results);
void write_results_csv(const std::filesystem::path& path, const std::vector<EpisodeResult>& results);

/// W x W ego-centric navigability map; row 0 is ahead of the agent, the
/// agent sits at the centre cell facing up.
struct EgoMap {
  using Cells = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  double cell_size = 0.2;
  Cells cells;

  int size() const { return static_cast<int>(cells.rows()); }
  int center() const { return size() / 2; }
  bool navigable(int u, int v) const { return cells(v, u) != 0; }
  std::size_t count() const { return static_cast<std::size_t>((cells != 0).count()); }
  bool operator==(const EgoMap& o) const { return cell_size == o.cell_size && (cells == o.cells).all(); }
};

/// World point sampled by ego cell (u, v).
Eigen::Vector2d ego_cell_world(const Pose& pose, int u, int v, int size, double cell_size);

EgoMap render_ego_gt(const OccupancyGrid& grid, const Pose& pose, const SeenMask& seen, int size = 33,
                     double cell_size = 0.2);

/// IoU of the navigable class; 1 when both maps are empty.
double iou(const EgoMap& pred, const EgoMap& gt);

/// Mean over points of min(l / l*, l* / l), zero where l is infinite.
double sym_spl_score(const std::vector<double>& pred_lengths, const std::vector<double>& gt_lengths);

/// Samples up to n cells reachable from the centre on `gt` and compares the
/// 8-connected shortest paths on both maps. `used` receives the number of
/// sampled points; with none the score is 1.
double sym_spl(const EgoMap& pred, const EgoMap& gt, int n, Rng& rng, int* used = nullptr);

struct ProbeDataset {
  int map_size = 33;
  double cell_size = 0.2;
  ad::Mat<float> representations;  // [N x H]
  EgoMap::Cells maps;              // [N x W*W]
  std::vector<std::string> map_ids;

  int size() const { return static_cast<int>(representations.rows()); }
  EgoMap map(int i) const;
};

/// Throws std::invalid_argument when the two sets share a map id.
void check_disjoint(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Expert-driven rollouts with the main agent encoding every observation;
/// (r, M*) pairs at steps floor(i T / n), i < n.
ProbeDataset collect_probe_dataset(const MainNet<float>& net, const MapSet& maps,
                                   const std::vector<LongEpisode>& episodes, int samples_per_episode = 20,
                                   int map_size = 33, double cell_size = 0.2, const SensorConfig& sensor = {});

struct ProbeConfig {
  int hidden = 256;
  int channels = 8;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  int batch = 64;
  int max_epochs = 40;
  int patience = 6;
  std::uint64_t seed = 0;
};

struct Probe {
  int input = 0;
  int map_size = 33;
  double cell_size = 0.2;
  int channels = 8;
  ad::ParamStore<float> store;

  /// Per-cell logits [(B W^2) x 2] for B representations.
  ad::Var<float> logits(ad::Tape<float>& t, const ad::Mat<float>& r) const;
  EgoMap predict(const Eigen::Ref<const Eigen::RowVectorXf>& r) const;
};

struct ProbeReport {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

Probe make_probe(int input, int map_size, double cell_size, const ProbeConfig& config);

/// Minibatch AdamW with early stopping on the validation loss; returns the
/// parameters of the best epoch.
Probe train_probe(const ProbeDataset& train, const ProbeDataset& val, const ProbeConfig& config,
                  ProbeReport* report = nullptr);

double probe_loss(const Probe& probe, const ProbeDataset& data);

struct ProbeScores {
  double iou = 0.0;
  double sym_spl = 0.0;
  int samples = 0;
};

ProbeScores score_probe(const Probe& probe, const ProbeDataset& test, int sym_points = 10, std::uint64_t seed = 0);

/// Binary PGM of an ego map, navigable = 255.
std::string ego_pgm(const EgoMap& map);

}  // namespace navig

#endif  // NAVIG_EVALKIT_HPP
