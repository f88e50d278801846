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

#ifndef NAVIG_TRAINING_HPP
#define NAVIG_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "navig/agents.hpp"
#include "navig/autodiff.hpp"
#include "navig/episodes.hpp"
#include "navig/geodesy.hpp"
#include "navig/world.hpp"

namespace navig {

struct MapEntry {
  std::string id;
  OccupancyGrid grid;
  std::shared_ptr<const Traversability> traversability;
};

using MapSet = std::vector<MapEntry>;

MapEntry make_map_entry(std::string id, OccupancyGrid grid);
const MapEntry& find_map(const MapSet& maps, const std::string& id);

enum class EnvRole { kPpo, kBc };

enum class Preset { kA, kB, kC, kD, kE, kF, kG };

char preset_letter(Preset p);
Preset parse_preset(std::string_view s);

struct PresetSpec {
  int ppo_envs = 0;
  int bc_envs = 0;
  bool main_long = false;   // BC loss of the main policy on long segments
  bool main_short = false;  // ... and on short segments, conditioned on the subgoal
  bool mole = false;        // navigability loss
  bool short_episodes = false;
  std::string label;
};

PresetSpec preset_spec(Preset p, int total_envs = 12);

struct RewardConfig {
  double success_reward = 2.5;
  double slack = 0.01;
};

/// R * success - (d_now - d_prev) - slack.
double compute_reward(double d_prev, double d_now, bool success, const RewardConfig& config = {});
double compute_reward(const Pose& prev, const Pose& pose, bool success, const DistanceField& field,
                      const RewardConfig& config = {});

struct PpoConfig {
  double clip = 0.2;
  int epochs = 4;
  int minibatches = 2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double lr = 2.5e-4;
  double max_grad_norm = 0.5;
};

struct TrainConfig {
  Preset preset = Preset::kE;
  ContinuityVariant continuity = ContinuityVariant::kContinue;
  CommVariant comm = CommVariant::kAsObservation;
  AgentDims dims;
  int envs = 12;
  int rollout_length = 128;
  std::int64_t phase1_steps = 2'000'000;
  std::int64_t phase2_steps = 2'000'000;
  double bc_lr = 1e-3;
  double bc_max_grad_norm = 1.0;
  PpoConfig ppo;
  RewardConfig reward;
  MiningConfig mining;
  EpisodeConstraints constraints;
  SensorConfig sensor;
  Kinematics kinematics;
  int max_episode_steps = 500;
  int max_short_steps = 100;
  int val_episodes = 48;
  int val_evals = 8;  // validation passes over phase 2
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct Slot {
  SegmentKind kind = SegmentKind::kLong;
  bool main_step = false;
  bool episode_start = false;          // main state and previous action reset before this slot
  Directive directive = Directive::kNone;  // continuity directive applied before this slot
  bool save_after = false;             // the action of this slot reached a waypoint
  bool short_start = false;
  bool short_end = false;              // the short segment ends after this slot (teleport back)
  int prev_action = kStartToken;       // main agent input
  int mole_prev_action = kStartToken;  // mole input (short slots)
  int expert = -1;
  int action = 0;
  bool done = false;  // episode ended after this slot
  bool success = false;
  float reward = 0.0f;
  float value = 0.0f;
  float logprob = 0.0f;
  Pose pose;  // before the action
};

/// Recurrent state carried across buffers of one environment.
struct Carry {
  Eigen::RowVectorXf main;
  Eigen::RowVectorXf saved;
  bool has_saved = false;
  Eigen::RowVectorXf mole;   // mole hidden of a short segment cut by the buffer end
  Eigen::RowVectorXf mole_r; // its representation snapshot
};

/// Fixed-length storage of one environment's steps.
struct EnvBuffer {
  EnvRole role = EnvRole::kBc;
  int env = 0;
  std::vector<Slot> slots;
  ad::Mat<float> obs;      // [L x obs_features], rows of main-stepped slots
  ad::Mat<float> goal;     // [L x 3]
  ad::Mat<float> subgoal;  // [L x 3], short slots
  Carry start;             // carry at the first slot
  bool short_continues = false;  // the last slot belongs to an unfinished short segment
  float last_value = 0.0f;       // bootstrap value after the last slot (PPO)
  ad::Mat<float> state_in;       // filled by forward passes: main state entering each main-stepped slot
  ad::Mat<float> state_out;

  int length() const { return static_cast<int>(slots.size()); }
  int count(SegmentKind kind) const;
  int main_steps() const;
};

class NavEnv;

/// Environments, nets and optimizer state for one run.
class Trainer {
 public:
  Trainer(TrainConfig config, const MapSet* train_maps, const MapSet* val_maps);
  ~Trainer();

  const TrainConfig& config() const { return config_; }
  ad::ParamStore<float>& store() { return store_; }
  const MainNet<float>& main_net() const { return main_; }
  const AuxNet<float>* aux_net() const { return aux_ ? &*aux_ : nullptr; }
  bool has_mole() const { return aux_.has_value(); }

  /// Rows that went through the main observation encoder so far.
  std::int64_t encoder_rows() const { return encoder_rows_; }
  std::int64_t env_steps() const { return env_steps_; }

  /// Collects one buffer per environment with the current roles.
  std::vector<EnvBuffer> collect();

  struct BcLosses {
    double nav = 0.0;
    double bc = 0.0;
    int nav_slots = 0;
    int bc_slots = 0;
  };
  struct PpoStats {
    double policy = 0.0;
    double value = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
  };

  /// Forward over the BC buffers, fills state_in/state_out and the carries,
  /// and (when `update`) applies one AdamW step on the active BC losses.
  BcLosses bc_update(std::vector<EnvBuffer>& buffers, bool update = true);
  PpoStats ppo_update(std::vector<EnvBuffer>& buffers);

  struct LogRow {
    int phase = 1;
    int iteration = 0;
    std::int64_t env_steps = 0;
    double nav_loss = 0.0, bc_loss = 0.0, policy_loss = 0.0, value_loss = 0.0, entropy = 0.0;
    double train_success = 0.0;
    int train_episodes = 0;
    double val_success = -1.0;
  };

  std::vector<LogRow> run_phase1(std::int64_t budget_steps);
  /// Discards the mole, reinitializes the policy and value heads, trains with
  /// PPO on all environments and keeps the parameters with the best validation
  /// success.
  std::vector<LogRow> run_phase2(std::int64_t budget_steps);

  double best_val_success() const { return best_val_success_; }

  /// Replaces the environment roles (phase 2 sets every env to PPO).
  void set_roles(int ppo_envs, int bc_envs);

  std::function<void(const LogRow&)> on_log;

 private:
  double validate_policy();

  TrainConfig config_;
  PresetSpec spec_;
  const MapSet* train_maps_;
  const MapSet* val_maps_;
  ad::ParamStore<float> store_;
  MainNet<float> main_;
  std::optional<AuxNet<float>> aux_;
  std::vector<std::unique_ptr<NavEnv>> envs_;
  std::vector<LongEpisode> val_episodes_;
  Rng rng_;
  std::int64_t encoder_rows_ = 0;
  std::int64_t env_steps_ = 0;
  double best_val_success_ = -1.0;
  int phase_ = 1;
};

std::string log_csv_header();
std::string log_csv_row(const Trainer::LogRow& row);

/// Clipped surrogate term min(ratio * A, clip(ratio, 1 - c, 1 + c) * A).
double ppo_surrogate(double ratio, double advantage, double clip);

/// GAE over one environment's slots; returns advantages, fills returns.
std::vector<double> gae(const std::vector<Slot>& slots, double last_value, double gamma, double lambda,
                        std::vector<double>* returns = nullptr);

/// Mean cross-entropy of the mole over short slots and of the main policy
/// over the slots in scope, computed on a fresh tape with the given nets.
/// Returned Vars are 1x1; zero when no slot is in scope.
template <typename S>
struct LossTerms {
  Var<S> nav;
  Var<S> bc;
  int nav_slots = 0;
  int bc_slots = 0;
};

/// Graph of the BC losses over `buffers` (all BC role). `states` receives the
/// per-slot main states; carries are read from each buffer's `start`.
template <typename S>
LossTerms<S> bc_losses(Tape<S>& t, const MainNet<S>& main, const AuxNet<S>* aux, const std::vector<EnvBuffer*>& buffers,
                       bool main_long, bool main_short, std::vector<Carry>* end_carry = nullptr);

/// Mole closed-loop rollout for the blindness checks: the main agent follows
/// the expert on the long segment up to the first waypoint, then the mole
/// acts greedily toward `subgoal` from the waypoint pose. `perturb` may
/// rewrite every observation seen after the waypoint.
struct MoleRollout {
  std::vector<int> actions;
  Eigen::RowVectorXf representation;
};

MoleRollout mole_closed_loop(const MainNet<float>& main, const AuxNet<float>& aux, const MapEntry& map,
                             const LongEpisode& episode, int subgoal, ContinuityVariant continuity,
                             const std::function<void(Observation&)>& perturb, int max_steps = 100);

}  // namespace navig

#endif  // NAVIG_TRAINING_HPP
