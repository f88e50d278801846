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

#include "navig/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "navig/errors.hpp"
#include "navig/evalkit.hpp"
#include "navig/log.hpp"

namespace navig {

MapEntry make_map_entry(std::string id, OccupancyGrid grid) {
  MapEntry e;
  e.id = std::move(id);
  e.traversability = std::make_shared<const Traversability>(grid, kPlanningClearance);
  e.grid = std::move(grid);
  return e;
}

const MapEntry& find_map(const MapSet& maps, const std::string& id) {
  for (const MapEntry& m : maps)
    if (m.id == id) return m;
  throw ArtifactError("unknown map id '" + id + "'");
}

char preset_letter(Preset p) { return static_cast<char>('a' + static_cast<int>(p)); }

Preset parse_preset(std::string_view s) {
  if (s.size() == 1 && s[0] >= 'a' && s[0] <= 'g') return static_cast<Preset>(s[0] - 'a');
  throw ConfigError("unknown preset '" + std::string(s) + "', expected a..g");
}

PresetSpec preset_spec(Preset p, int total) {
  if (total < 2) throw ConfigError("presets need at least 2 environments");
  const int half = total / 2;
  switch (p) {
    case Preset::kA:
      return {total, 0, false, false, false, false, "Pure PPO"};
    case Preset::kB:
      return {0, total, true, false, false, false, "Pure BC (L)"};
    case Preset::kC:
      return {0, total, true, true, false, true, "BC (L+S)"};
    case Preset::kD:
      return {0, total, false, false, true, true, "Navig"};
    case Preset::kE:
      return {0, total, true, false, true, true, "Navig + BC (L)"};
    case Preset::kF:
      return {half, total - half, false, false, true, true, "PPO + Navig"};
    case Preset::kG:
      return {half, total - half, true, false, true, true, "PPO + Navig + BC (L)"};
  }
  throw ConfigError("invalid preset");
}

double compute_reward(double d_prev, double d_now, bool success, const RewardConfig& config) {
  return (success ? config.success_reward : 0.0) - (d_now - d_prev) - config.slack;
}

double compute_reward(const Pose& prev, const Pose& pose, bool success, const DistanceField& field,
                      const RewardConfig& config) {
  const double a = geodesic_distance(field, prev.position());
  const double b = geodesic_distance(field, pose.position());
  if (!std::isfinite(a) || !std::isfinite(b)) return compute_reward(0.0, 0.0, success, config);
  return compute_reward(a, b, success, config);
}

void TrainConfig::validate() const {
  dims.validate();
  mining.validate();
  preset_spec(preset, envs);
  if (dims.rays != sensor.rays) throw ConfigError("train: dims.rays must equal sensor.rays");
  if (rollout_length < 1) throw ConfigError("train: rollout_length must be >= 1");
  if (phase1_steps < 0 || phase2_steps < 0) throw ConfigError("train: budgets must be >= 0");
  if (!(bc_lr > 0.0) || bc_max_grad_norm < 0.0) throw ConfigError("train: bc_lr must be > 0");
  if (!(ppo.clip > 0.0 && ppo.clip < 1.0)) throw ConfigError("train: ppo.clip must lie in (0, 1)");
  if (ppo.epochs < 1 || ppo.minibatches < 1) throw ConfigError("train: ppo epochs and minibatches must be >= 1");
  if (!(ppo.gamma > 0.0 && ppo.gamma <= 1.0) || !(ppo.gae_lambda >= 0.0 && ppo.gae_lambda <= 1.0))
    throw ConfigError("train: ppo.gamma in (0, 1], ppo.gae_lambda in [0, 1]");
  if (!(ppo.lr > 0.0)) throw ConfigError("train: ppo.lr must be > 0");
  if (max_episode_steps < 1 || max_short_steps < 1) throw ConfigError("train: step caps must be >= 1");
  if (val_episodes < 0 || val_evals < 0) throw ConfigError("train: validation counts must be >= 0");
}

namespace {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, const nlohmann::json& defaults, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"preset", std::string(1, preset_letter(c.preset))},
      {"continuity", std::string(continuity_name(c.continuity))},
      {"comm", std::string(comm_name(c.comm))},
      {"dims", to_json(c.dims)},
      {"envs", c.envs},
      {"rollout_length", c.rollout_length},
      {"phase1_steps", c.phase1_steps},
      {"phase2_steps", c.phase2_steps},
      {"bc_lr", c.bc_lr},
      {"bc_max_grad_norm", c.bc_max_grad_norm},
      {"ppo",
       {{"clip", c.ppo.clip},
        {"epochs", c.ppo.epochs},
        {"minibatches", c.ppo.minibatches},
        {"entropy_coef", c.ppo.entropy_coef},
        {"value_coef", c.ppo.value_coef},
        {"gamma", c.ppo.gamma},
        {"gae_lambda", c.ppo.gae_lambda},
        {"lr", c.ppo.lr},
        {"max_grad_norm", c.ppo.max_grad_norm}}},
      {"reward", {{"success_reward", c.reward.success_reward}, {"slack", c.reward.slack}}},
      {"mining", to_json(c.mining)},
      {"constraints",
       {{"min_geodesic", c.constraints.min_geodesic},
        {"max_geodesic", c.constraints.max_geodesic},
        {"min_ratio", c.constraints.min_ratio},
        {"max_goal_attempts", c.constraints.max_goal_attempts}}},
      {"max_episode_steps", c.max_episode_steps},
      {"max_short_steps", c.max_short_steps},
      {"val_episodes", c.val_episodes},
      {"val_evals", c.val_evals},
      {"seed", c.seed},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  const nlohmann::json d = to_json(c);
  reject_unknown(j, d, "train");
  if (j.contains("preset")) c.preset = parse_preset(j.at("preset").get<std::string>());
  if (j.contains("continuity")) c.continuity = parse_continuity(j.at("continuity").get<std::string>());
  if (j.contains("comm")) c.comm = parse_comm(j.at("comm").get<std::string>());
  if (j.contains("dims")) c.dims = agent_dims_from_json(j.at("dims"));
  read_key(j, "envs", c.envs);
  read_key(j, "rollout_length", c.rollout_length);
  read_key(j, "phase1_steps", c.phase1_steps);
  read_key(j, "phase2_steps", c.phase2_steps);
  read_key(j, "bc_lr", c.bc_lr);
  read_key(j, "bc_max_grad_norm", c.bc_max_grad_norm);
  if (j.contains("ppo")) {
    const auto& p = j.at("ppo");
    reject_unknown(p, d.at("ppo"), "train.ppo");
    read_key(p, "clip", c.ppo.clip);
    read_key(p, "epochs", c.ppo.epochs);
    read_key(p, "minibatches", c.ppo.minibatches);
    read_key(p, "entropy_coef", c.ppo.entropy_coef);
    read_key(p, "value_coef", c.ppo.value_coef);
    read_key(p, "gamma", c.ppo.gamma);
    read_key(p, "gae_lambda", c.ppo.gae_lambda);
    read_key(p, "lr", c.ppo.lr);
    read_key(p, "max_grad_norm", c.ppo.max_grad_norm);
  }
  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    reject_unknown(r, d.at("reward"), "train.reward");
    read_key(r, "success_reward", c.reward.success_reward);
    read_key(r, "slack", c.reward.slack);
  }
  if (j.contains("mining")) c.mining = mining_from_json(j.at("mining"));
  if (j.contains("constraints")) {
    const auto& k = j.at("constraints");
    reject_unknown(k, d.at("constraints"), "train.constraints");
    read_key(k, "min_geodesic", c.constraints.min_geodesic);
    read_key(k, "max_geodesic", c.constraints.max_geodesic);
    read_key(k, "min_ratio", c.constraints.min_ratio);
    read_key(k, "max_goal_attempts", c.constraints.max_goal_attempts);
  }
  read_key(j, "max_episode_steps", c.max_episode_steps);
  read_key(j, "max_short_steps", c.max_short_steps);
  read_key(j, "val_episodes", c.val_episodes);
  read_key(j, "val_evals", c.val_evals);
  read_key(j, "seed", c.seed);
  c.validate();
  return c;
}

int EnvBuffer::count(SegmentKind kind) const {
  return static_cast<int>(std::count_if(slots.begin(), slots.end(), [&](const Slot& s) { return s.kind == kind; }));
}

int EnvBuffer::main_steps() const {
  return static_cast<int>(std::count_if(slots.begin(), slots.end(), [](const Slot& s) { return s.main_step; }));
}

/// One simulated environment. BC environments run the step plan of a mined
/// long episode with the expert; PPO environments run plain PointGoal
/// episodes driven by the caller's actions.
class NavEnv {
 public:
  NavEnv(int index, EnvRole role, const TrainConfig& config, const PresetSpec& spec, const MapSet& maps,
         std::uint64_t seed)
      : index_(index),
        role_(role),
        config_(config),
        spec_(spec),
        maps_(&maps),
        rng_(Rng::derive(seed, 0)),
        act_rng_(Rng::derive(seed, 1)),
        noise_rng_(Rng::derive(seed, 2)) {
    if (maps.empty()) throw ConfigError("training needs at least one map");
    const int h = config.dims.hidden;
    carry.main = Eigen::RowVectorXf::Zero(h);
    carry.saved = Eigen::RowVectorXf::Zero(h);
  }

  EnvRole role() const { return role_; }
  int index() const { return index_; }
  Rng& action_rng() { return act_rng_; }
  bool in_short() const { return active_ && plan_.segments[seg_].kind == SegmentKind::kShort; }

  Carry carry;
  int episodes = 0;
  int successes = 0;

  void bc_slot(EnvBuffer& b, int i) {
    if (!active_) begin_episode();
    const Segment& seg = plan_.segments[seg_];
    Slot& s = b.slots[static_cast<std::size_t>(i)];
    s = Slot{};
    s.kind = seg.kind;
    s.pose = pose_;
    s.episode_start = pending_start_;
    pending_start_ = false;
    const bool is_short = seg.kind == SegmentKind::kShort;
    if (!seg_started_) {
      seg_started_ = true;
      if (!s.episode_start) s.directive = seg.on_start;
      if (s.directive == Directive::kZero) prev_main_ = kStartToken;
      if (s.directive == Directive::kRestore) prev_main_ = saved_prev_main_;
      if (is_short) {
        s.short_start = true;
        sub_field_ = distance_field(map_->traversability, seg.target);
        short_steps_ = 0;
        prev_mole_ = kStartToken;
      }
    }
    s.main_step = !is_short || spec_.main_short;
    const Eigen::Vector2d target = is_short ? seg.target : episode_.goal;
    if (s.main_step) {
      const Observation o = observe(map_->grid, pose_, target, config_.sensor, NoiseConfig{}, noise_rng_, nullptr,
                                    prev_collided_);
      b.obs.row(i) = obs_features(o, config_.sensor);
      b.goal.row(i) = goal_features(o.goal);
      s.prev_action = prev_main_;
    }
    if (is_short) {
      b.subgoal.row(i) = goal_features(goal_vector(pose_, seg.target));
      s.mole_prev_action = prev_mole_;
    }
    Action a = Action::kStop;
    bool failed = false;
    try {
      a = expert_action(map_->grid, pose_, target, is_short ? sub_field_ : goal_field_, kSuccessRadius,
                        config_.kinematics);
    } catch (const UnreachableError&) {
      failed = true;
    }
    s.expert = static_cast<int>(a);
    s.action = s.expert;
    const StepResult r = step(map_->grid, pose_, a, NoiseConfig{}, noise_rng_, config_.kinematics);
    pose_ = r.pose;
    prev_collided_ = r.collided;
    if (s.main_step) prev_main_ = s.action;
    if (is_short) {
      prev_mole_ = s.action;
      ++short_steps_;
      if (a == Action::kStop || short_steps_ >= config_.max_short_steps) {
        s.short_end = true;
        pose_ = waypoint_pose_;
        prev_collided_ = false;
        next_segment(s);
      }
      return;
    }
    ++long_steps_;
    if (a == Action::kStop) {
      end_episode(s, !failed && (pose_.position() - episode_.goal).norm() <= kSuccessRadius);
    } else if (long_steps_ >= config_.max_episode_steps) {
      end_episode(s, false);
    } else if (seg.save_at_end && waypoint_reached(seg)) {
      s.save_after = true;
      saved_prev_main_ = prev_main_;
      waypoint_pose_ = pose_;
      next_segment(s);
    }
  }

  void ppo_prepare(EnvBuffer& b, int i) {
    if (!active_) begin_episode();
    Slot& s = b.slots[static_cast<std::size_t>(i)];
    s = Slot{};
    s.kind = SegmentKind::kLong;
    s.main_step = true;
    s.pose = pose_;
    s.episode_start = pending_start_;
    pending_start_ = false;
    if (s.episode_start) {
      carry.main.setZero();
      prev_main_ = kStartToken;
    }
    Eigen::RowVector3f g;
    Eigen::RowVectorXf o;
    inputs(o, g);
    b.obs.row(i) = o;
    b.goal.row(i) = g;
    s.prev_action = prev_main_;
  }

  /// Policy inputs at the current pose without advancing anything.
  void inputs(Eigen::RowVectorXf& obs, Eigen::RowVector3f& goal) {
    const Observation o = observe(map_->grid, pose_, episode_.goal, config_.sensor, NoiseConfig{}, noise_rng_, nullptr,
                                  prev_collided_);
    obs = obs_features(o, config_.sensor);
    goal = goal_features(o.goal);
  }
  int prev_action() const { return prev_main_; }
  bool active() const { return active_; }

  void ppo_act(EnvBuffer& b, int i, int action) {
    Slot& s = b.slots[static_cast<std::size_t>(i)];
    const Action a = static_cast<Action>(action);
    s.action = action;
    const double d_prev = distance_;
    const StepResult r = step(map_->grid, pose_, a, NoiseConfig{}, noise_rng_, config_.kinematics);
    pose_ = r.pose;
    prev_collided_ = r.collided;
    prev_main_ = action;
    ++long_steps_;
    const double d = geodesic_distance(goal_field_, pose_.position());
    if (std::isfinite(d)) distance_ = d;
    const bool success = a == Action::kStop && (pose_.position() - episode_.goal).norm() <= kSuccessRadius;
    s.reward = static_cast<float>(compute_reward(d_prev, distance_, success, config_.reward));
    if (a == Action::kStop || long_steps_ >= config_.max_episode_steps) end_episode(s, success);
  }

 private:
  void begin_episode() {
    for (int attempt = 0;; ++attempt) {
      map_ = &(*maps_)[static_cast<std::size_t>(rng_.below(maps_->size()))];
      try {
        episode_ = sample_long_episode(map_->traversability, map_->id, rng_, config_.constraints,
                                       config_.mining.waypoint_spacing, &goal_field_);
        break;
      } catch (const SamplingError&) {
        if (attempt >= 16) throw;
      }
    }
    if (role_ == EnvRole::kBc && spec_.short_episodes)
      mine_episode(map_->traversability, episode_, config_.mining);
    else
      episode_.waypoints.clear();
    plan_ = flatten(episode_, config_.continuity);
    pose_ = episode_.start;
    distance_ = geodesic_distance(goal_field_, pose_.position());
    seg_ = 0;
    seg_started_ = false;
    pending_start_ = true;
    prev_collided_ = false;
    long_steps_ = 0;
    prev_main_ = kStartToken;
    saved_prev_main_ = kStartToken;
    active_ = true;
  }

  bool waypoint_reached(const Segment& seg) const {
    const double remaining =
        episode_.gt_path_length - episode_.waypoints[static_cast<std::size_t>(seg.waypoint)].arc_length;
    return geodesic_distance(goal_field_, pose_.position()) <= remaining + 1e-9;
  }

  void next_segment(Slot& s) {
    ++seg_;
    seg_started_ = false;
    if (seg_ >= plan_.segments.size()) end_episode(s, false);
  }

  void end_episode(Slot& s, bool success) {
    s.done = true;
    s.success = success;
    ++episodes;
    if (success) ++successes;
    active_ = false;
  }

  int index_;
  EnvRole role_;
  const TrainConfig& config_;
  PresetSpec spec_;
  const MapSet* maps_;
  Rng rng_, act_rng_, noise_rng_;

  bool active_ = false;
  const MapEntry* map_ = nullptr;
  LongEpisode episode_;
  StepPlan plan_;
  std::size_t seg_ = 0;
  bool seg_started_ = false;
  bool pending_start_ = false;
  DistanceField goal_field_, sub_field_;
  Pose pose_, waypoint_pose_;
  double distance_ = 0.0;
  bool prev_collided_ = false;
  int long_steps_ = 0, short_steps_ = 0;
  int prev_main_ = kStartToken, saved_prev_main_ = kStartToken, prev_mole_ = kStartToken;
};

template <typename S>
LossTerms<S> bc_losses(Tape<S>& t, const MainNet<S>& main, const AuxNet<S>* aux, const std::vector<EnvBuffer*>& bufs,
                       bool main_long, bool main_short, std::vector<Carry>* end_carry) {
  using M = MatX<S>;
  using Ref = ad::RowRef<S>;
  const int E = static_cast<int>(bufs.size());
  const int H = main.dims.hidden;
  const int F = main.dims.obs_features();
  LossTerms<S> out;
  const Var<S> zero = t.constant(M::Zero(1, 1));
  out.nav = zero;
  out.bc = zero;

  M c_main = M::Zero(E, H), c_saved = M::Zero(E, H);
  const int Ha = aux ? aux->hidden() : 0;
  M c_mole = M::Zero(E, std::max(Ha, 1)), c_mole_r = M::Zero(E, H);
  int max_len = 0;
  for (int e = 0; e < E; ++e) {
    const Carry& c = bufs[e]->start;
    if (c.main.size() == H) c_main.row(e) = c.main.template cast<S>();
    if (c.has_saved) c_saved.row(e) = c.saved.template cast<S>();
    if (aux && c.mole.size() == Ha) c_mole.row(e) = c.mole.template cast<S>();
    if (aux && c.mole_r.size() == H) c_mole_r.row(e) = c.mole_r.template cast<S>();
    max_len = std::max(max_len, bufs[e]->length());
  }
  const Var<S> C_main = t.constant(std::move(c_main)), C_saved = t.constant(std::move(c_saved));
  const Var<S> C_mole = t.constant(std::move(c_mole)), C_mole_r = t.constant(std::move(c_mole_r));
  std::vector<Ref> cur(E), saved(E);
  for (int e = 0; e < E; ++e) {
    if (bufs[e]->start.main.size() == H) cur[e] = {C_main, e};
    if (bufs[e]->start.has_saved) saved[e] = {C_saved, e};
  }

  // Encoder and input projection for every main-stepped slot at once.
  std::vector<std::vector<int>> row(E);
  int N = 0;
  for (int e = 0; e < E; ++e) {
    row[e].assign(bufs[e]->slots.size(), -1);
    for (int i = 0; i < bufs[e]->length(); ++i)
      if (bufs[e]->slots[i].main_step) row[e][i] = N++;
  }
  const GruPrepared<S> g = GruPrepared<S>::bind(t, main.gru);
  Var<S> XG, XC;
  if (N > 0) {
    M obs(N, F), goal(N, 3);
    std::vector<int> prev(static_cast<std::size_t>(N));
    for (int e = 0; e < E; ++e)
      for (int i = 0; i < bufs[e]->length(); ++i) {
        const int r = row[e][i];
        if (r < 0) continue;
        obs.row(r) = bufs[e]->obs.row(i).template cast<S>();
        goal.row(r) = bufs[e]->goal.row(i).template cast<S>();
        prev[static_cast<std::size_t>(r)] = bufs[e]->slots[i].prev_action;
      }
    if (!obs.allFinite() || !goal.allFinite()) throw NumericalError("bc_losses: non-finite observation features");
    std::tie(XG, XC) = g.project(main.features(t, obs, goal, prev));
  }

  struct Run {
    int env, first, length;
    bool fresh;
    Ref r;
  };
  std::vector<Run> runs;
  std::vector<std::vector<int>> run_at(E);
  if (aux) {
    for (int e = 0; e < E; ++e) {
      const auto& slots = bufs[e]->slots;
      run_at[e].assign(slots.size(), -1);
      for (int i = 0; i < bufs[e]->length();) {
        if (slots[i].kind != SegmentKind::kShort) {
          ++i;
          continue;
        }
        int j = i + 1;
        while (j < bufs[e]->length() && slots[j].kind == SegmentKind::kShort && !slots[j].short_start) ++j;
        run_at[e][i] = static_cast<int>(runs.size());
        runs.push_back({e, i, j - i, slots[i].short_start, {}});
        if (!slots[i].short_start) runs.back().r = {C_mole_r, e};
        i = j;
      }
    }
  }

  std::vector<std::vector<Ref>> hout(E);
  for (int e = 0; e < E; ++e) {
    hout[e].assign(bufs[e]->slots.size(), Ref{});
    bufs[e]->state_in = ad::Mat<float>::Zero(bufs[e]->length(), H);
    bufs[e]->state_out = ad::Mat<float>::Zero(bufs[e]->length(), H);
  }
  for (int i = 0; i < max_len; ++i) {
    std::vector<Ref> hin, xg, xc;
    std::vector<int> who;
    for (int e = 0; e < E; ++e) {
      if (i >= bufs[e]->length()) continue;
      const Slot& s = bufs[e]->slots[i];
      if (s.episode_start) {
        cur[e] = {};
        saved[e] = {};
      }
      if (s.directive == Directive::kZero) cur[e] = {};
      if (s.directive == Directive::kRestore) {
        if (!saved[e].var.valid()) throw std::logic_error("continuity: restore without a saved waypoint state");
        cur[e] = saved[e];
      }
      if (aux && run_at[e][i] >= 0 && runs[run_at[e][i]].fresh) runs[run_at[e][i]].r = saved[e];
      if (s.main_step) {
        hin.push_back(cur[e]);
        xg.push_back({XG, row[e][i]});
        xc.push_back({XC, row[e][i]});
        who.push_back(e);
      }
    }
    if (!who.empty()) {
      const Var<S> h = ad::gather_rows(t, hin, H);
      const Var<S> hn = g.advance(ad::gather_rows(t, xg, 2 * H), ad::gather_rows(t, xc, H), h);
      for (std::size_t k = 0; k < who.size(); ++k) {
        const int e = who[k];
        cur[e] = {hn, static_cast<Eigen::Index>(k)};
        hout[e][i] = cur[e];
        bufs[e]->state_in.row(i) = h.value().row(k).template cast<float>();
        bufs[e]->state_out.row(i) = hn.value().row(k).template cast<float>();
      }
    }
    for (int e = 0; e < E; ++e)
      if (i < bufs[e]->length() && bufs[e]->slots[i].save_after) saved[e] = cur[e];
  }

  if (main_long || main_short) {
    std::vector<Ref> refs;
    std::vector<int> targets;
    for (int e = 0; e < E; ++e)
      for (int i = 0; i < bufs[e]->length(); ++i) {
        const Slot& s = bufs[e]->slots[i];
        const bool scope = s.kind == SegmentKind::kLong ? main_long : main_short;
        if (!scope || !s.main_step || s.expert < 0) continue;
        refs.push_back(hout[e][i]);
        targets.push_back(s.expert);
      }
    out.bc_slots = static_cast<int>(refs.size());
    if (refs.empty())
      log_warn("bc_loss: no slot in scope, loss is zero");
    else
      out.bc = ad::cross_entropy(main.logits(t, ad::gather_rows(t, refs, H)), targets);
  }

  if (end_carry) {
    end_carry->assign(static_cast<std::size_t>(E), Carry{});
    for (int e = 0; e < E; ++e) {
      Carry& c = (*end_carry)[e];
      c.main = cur[e].var.valid() ? Eigen::RowVectorXf(cur[e].var.value().row(cur[e].row).template cast<float>())
                                  : Eigen::RowVectorXf::Zero(H);
      c.has_saved = saved[e].var.valid();
      c.saved = c.has_saved ? Eigen::RowVectorXf(saved[e].var.value().row(saved[e].row).template cast<float>())
                            : Eigen::RowVectorXf::Zero(H);
    }
  }

  if (!aux) return out;
  if (runs.empty()) {
    log_warn("nav_loss: no short-segment slot, loss is zero");
    return out;
  }
  std::vector<int> order(runs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return runs[a].length > runs[b].length; });
  const int R = static_cast<int>(order.size());
  std::vector<Ref> rrefs(order.size());
  std::vector<int> offset(order.size());
  int Ns = 0;
  for (int k = 0; k < R; ++k) {
    rrefs[k] = runs[order[k]].r;
    offset[k] = Ns;
    Ns += runs[order[k]].length;
  }
  const Var<S> Rm = ad::gather_rows(t, rrefs, H);
  const Var<S> init = aux_init(t, *aux, Rm);
  std::vector<Ref> h0refs(order.size());
  for (int k = 0; k < R; ++k) h0refs[k] = runs[order[k]].fresh ? Ref{init, k} : Ref{C_mole, runs[order[k]].env};
  Var<S> h = ad::gather_rows(t, h0refs, Ha);

  M sub(Ns, 3);
  std::vector<int> mprev(static_cast<std::size_t>(Ns)), targets(static_cast<std::size_t>(Ns));
  for (int k = 0; k < R; ++k) {
    const Run& run = runs[order[k]];
    for (int j = 0; j < run.length; ++j) {
      const int i = run.first + j;
      sub.row(offset[k] + j) = bufs[run.env]->subgoal.row(i).template cast<S>();
      mprev[offset[k] + j] = bufs[run.env]->slots[i].mole_prev_action;
      targets[offset[k] + j] = bufs[run.env]->slots[i].expert;
    }
  }
  const GruPrepared<S> ga = GruPrepared<S>::bind(t, aux->gru);
  const auto [FG, FC] = ga.project(aux->features(t, sub, mprev));
  Var<S> RG, RC;
  const bool as_obs = aux->comm == CommVariant::kAsObservation;
  if (as_obs) std::tie(RG, RC) = ga.project(Rm, aux->step_input());
  std::vector<Var<S>> hk;
  int n = R;
  for (int j = 0; j < runs[order[0]].length; ++j) {
    while (n > 0 && runs[order[n - 1]].length <= j) --n;
    std::vector<Ref> gx(n), cx(n);
    for (int k = 0; k < n; ++k) {
      gx[k] = {FG, offset[k] + j};
      cx[k] = {FC, offset[k] + j};
    }
    Var<S> xg = ad::gather_rows(t, gx, 2 * Ha), xc = ad::gather_rows(t, cx, Ha);
    if (as_obs) {
      xg = ad::add(xg, ad::slice_rows(RG, 0, n));
      xc = ad::add(xc, ad::slice_rows(RC, 0, n));
    }
    if (h.rows() != n) h = ad::slice_rows(h, 0, n);
    h = ga.advance(xg, xc, h);
    hk.push_back(h);
  }
  std::vector<Ref> orefs(static_cast<std::size_t>(Ns));
  for (int k = 0; k < R; ++k)
    for (int j = 0; j < runs[order[k]].length; ++j) orefs[offset[k] + j] = {hk[j], k};
  out.nav = ad::cross_entropy(aux->policy(t, ad::gather_rows(t, orefs, Ha)), targets);
  out.nav_slots = Ns;

  if (end_carry)
    for (int k = 0; k < R; ++k) {
      const Run& run = runs[order[k]];
      const EnvBuffer& b = *bufs[run.env];
      if (run.first + run.length != b.length() || !b.short_continues) continue;
      Carry& c = (*end_carry)[run.env];
      c.mole = hk[run.length - 1].value().row(k).template cast<float>();
      c.mole_r = Rm.value().row(k).template cast<float>();
    }
  return out;
}

template LossTerms<float> bc_losses<float>(Tape<float>&, const MainNet<float>&, const AuxNet<float>*,
                                           const std::vector<EnvBuffer*>&, bool, bool, std::vector<Carry>*);
template LossTerms<double> bc_losses<double>(Tape<double>&, const MainNet<double>&, const AuxNet<double>*,
                                             const std::vector<EnvBuffer*>&, bool, bool, std::vector<Carry>*);
template LossTerms<long double> bc_losses<long double>(Tape<long double>&, const MainNet<long double>&,
                                                       const AuxNet<long double>*, const std::vector<EnvBuffer*>&, bool,
                                                       bool, std::vector<Carry>*);

double ppo_surrogate(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

std::vector<double> gae(const std::vector<Slot>& slots, double last_value, double gamma, double lambda,
                        std::vector<double>* returns) {
  const std::size_t n = slots.size();
  std::vector<double> adv(n, 0.0);
  double next_value = last_value;
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const Slot& s = slots[k];
    const double live = s.done ? 0.0 : 1.0;
    const double delta = s.reward + gamma * live * next_value - s.value;
    running = delta + gamma * lambda * live * running;
    adv[k] = running;
    next_value = s.value;
  }
  if (returns) {
    returns->resize(n);
    for (std::size_t k = 0; k < n; ++k) (*returns)[k] = adv[k] + slots[k].value;
  }
  return adv;
}

Trainer::Trainer(TrainConfig config, const MapSet* train_maps, const MapSet* val_maps)
    : config_(std::move(config)),
      spec_(preset_spec(config_.preset, config_.envs)),
      train_maps_(train_maps),
      val_maps_(val_maps),
      rng_(Rng::derive(config_.seed, 0)) {
  config_.validate();
  if (!train_maps_ || train_maps_->empty()) throw ConfigError("training needs at least one training map");
  Rng init = Rng::derive(config_.seed, 1);
  main_ = MainNet<float>::create(store_, config_.dims, init);
  main_.encoder_rows = &encoder_rows_;
  if (spec_.mole) aux_ = AuxNet<float>::create(store_, config_.dims, config_.comm, init);
  set_roles(spec_.ppo_envs, spec_.bc_envs);
  if (val_maps_ && !val_maps_->empty() && config_.val_episodes > 0) {
    Rng v = Rng::derive(0x76616c, 0);
    for (int k = 0; k < config_.val_episodes; ++k) {
      const MapEntry& m = (*val_maps_)[static_cast<std::size_t>(k) % val_maps_->size()];
      val_episodes_.push_back(sample_long_episode(m.traversability, m.id, v, config_.constraints, 0.0));
      val_episodes_.back().waypoints.clear();
    }
  }
}

Trainer::~Trainer() = default;

void Trainer::set_roles(int ppo_envs, int bc_envs) {
  envs_.clear();
  for (int e = 0; e < ppo_envs + bc_envs; ++e) {
    const std::uint64_t seed = Rng::derive(config_.seed, 100 + 1000 * phase_ + e).next();
    envs_.push_back(std::make_unique<NavEnv>(e, e < ppo_envs ? EnvRole::kPpo : EnvRole::kBc, config_, spec_,
                                             *train_maps_, seed));
  }
}

std::vector<EnvBuffer> Trainer::collect() {
  const int L = config_.rollout_length;
  const int F = config_.dims.obs_features();
  const int H = config_.dims.hidden;
  std::vector<EnvBuffer> out(envs_.size());
  std::vector<int> ppo, bc;
  for (std::size_t e = 0; e < envs_.size(); ++e) {
    EnvBuffer& b = out[e];
    b.role = envs_[e]->role();
    b.env = static_cast<int>(e);
    b.slots.resize(static_cast<std::size_t>(L));
    b.obs = ad::Mat<float>::Zero(L, F);
    b.goal = ad::Mat<float>::Zero(L, 3);
    b.subgoal = ad::Mat<float>::Zero(L, 3);
    b.start = envs_[e]->carry;
    (b.role == EnvRole::kPpo ? ppo : bc).push_back(static_cast<int>(e));
  }
  const int P = static_cast<int>(ppo.size());
  for (int i = 0; i < L; ++i) {
    for (int e : bc) envs_[e]->bc_slot(out[e], i);
    if (P == 0) continue;
    ad::Mat<float> obs(P, F), goal(P, 3), h(P, H);
    std::vector<int> prev(static_cast<std::size_t>(P));
    for (int k = 0; k < P; ++k) {
      NavEnv& env = *envs_[ppo[k]];
      env.ppo_prepare(out[ppo[k]], i);
      obs.row(k) = out[ppo[k]].obs.row(i);
      goal.row(k) = out[ppo[k]].goal.row(i);
      prev[k] = out[ppo[k]].slots[i].prev_action;
      h.row(k) = env.carry.main;
    }
    Tape<float> t(false);
    const MainStep<float> st = main_step(t, main_, obs, goal, prev, t.constant(h));
    const ad::Mat<float> logp = ad::detail::row_log_softmax(st.logits.value());
    for (int k = 0; k < P; ++k) {
      NavEnv& env = *envs_[ppo[k]];
      const int a = sample_row(st.logits.value().row(k), env.action_rng());
      Slot& s = out[ppo[k]].slots[i];
      s.logprob = logp(k, a);
      s.value = st.value.value()(k, 0);
      env.carry.main = st.r.value().row(k);
      env.ppo_act(out[ppo[k]], i, a);
    }
  }
  if (P > 0) {
    std::vector<int> live;
    for (int k = 0; k < P; ++k)
      if (envs_[ppo[k]]->active()) live.push_back(k);
    if (!live.empty()) {
      const int n = static_cast<int>(live.size());
      ad::Mat<float> obs(n, F), goal(n, 3), h(n, H);
      std::vector<int> prev(static_cast<std::size_t>(n));
      for (int q = 0; q < n; ++q) {
        NavEnv& env = *envs_[ppo[live[q]]];
        Eigen::RowVectorXf o;
        Eigen::RowVector3f g;
        env.inputs(o, g);
        obs.row(q) = o;
        goal.row(q) = g;
        prev[q] = env.prev_action();
        h.row(q) = env.carry.main;
      }
      Tape<float> t(false);
      const MainStep<float> st = main_step(t, main_, obs, goal, prev, t.constant(h));
      for (int q = 0; q < n; ++q) out[ppo[live[q]]].last_value = st.value.value()(q, 0);
    }
  }
  for (int e : bc) {
    const Slot& last = out[e].slots.back();
    out[e].short_continues = last.kind == SegmentKind::kShort && !last.short_end && !last.done;
  }
  env_steps_ += static_cast<std::int64_t>(L) * static_cast<std::int64_t>(envs_.size());
  return out;
}

Trainer::BcLosses Trainer::bc_update(std::vector<EnvBuffer>& buffers, bool update) {
  std::vector<EnvBuffer*> bc;
  for (EnvBuffer& b : buffers)
    if (b.role == EnvRole::kBc) bc.push_back(&b);
  BcLosses out;
  if (bc.empty()) return out;
  Tape<float> t(update);
  std::vector<Carry> end;
  const bool main_loss = phase_ == 1 && (spec_.main_long || spec_.main_short);
  const LossTerms<float> l =
      bc_losses(t, main_, aux_ ? &*aux_ : nullptr, bc, main_loss && spec_.main_long, main_loss && spec_.main_short, &end);
  out.nav = l.nav.scalar();
  out.bc = l.bc.scalar();
  out.nav_slots = l.nav_slots;
  out.bc_slots = l.bc_slots;
  if (!std::isfinite(out.nav) || !std::isfinite(out.bc)) throw NumericalError("bc_update: non-finite loss");
  for (std::size_t k = 0; k < bc.size(); ++k) envs_[bc[k]->env]->carry = end[k];
  if (update && (l.nav_slots > 0 || l.bc_slots > 0)) {
    t.backward(ad::add(l.nav, l.bc));
    ad::OptimConfig opt;
    opt.lr = config_.bc_lr;
    opt.max_grad_norm = config_.bc_max_grad_norm;
    ad::adamw_step(store_, opt);
  }
  return out;
}

Trainer::PpoStats Trainer::ppo_update(std::vector<EnvBuffer>& buffers) {
  std::vector<EnvBuffer*> ppo;
  for (EnvBuffer& b : buffers)
    if (b.role == EnvRole::kPpo) ppo.push_back(&b);
  PpoStats stats;
  if (ppo.empty()) return stats;
  const PpoConfig& c = config_.ppo;
  const int H = config_.dims.hidden;
  const int F = config_.dims.obs_features();
  const int E = static_cast<int>(ppo.size());

  std::vector<std::vector<double>> adv(E), ret(E);
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (int e = 0; e < E; ++e) {
    adv[e] = gae(ppo[e]->slots, ppo[e]->last_value, c.gamma, c.gae_lambda, &ret[e]);
    for (double a : adv[e]) {
      if (!std::isfinite(a)) throw NumericalError("ppo_update: non-finite advantage");
      sum += a;
      sq += a * a;
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  const double stdev = std::sqrt(std::max(sq / static_cast<double>(count) - mean * mean, 0.0));
  for (auto& v : adv)
    for (double& a : v) a = (a - mean) / (stdev + 1e-8);

  ad::OptimConfig opt;
  opt.lr = c.lr;
  opt.max_grad_norm = c.max_grad_norm;
  const int mb = std::min(c.minibatches, E);
  int updates = 0;
  std::vector<int> order(static_cast<std::size_t>(E));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    rng_.shuffle(order.begin(), order.end());
    for (int m = 0; m < mb; ++m) {
      std::vector<int> envs;
      for (int k = m; k < E; k += mb) envs.push_back(order[k]);
      std::sort(envs.begin(), envs.end());
      const int n = static_cast<int>(envs.size());
      const int L = ppo[envs[0]]->length();
      const int N = n * L;
      ad::Mat<float> obs(N, F), goal(N, 3), h0(n, H);
      std::vector<int> prev(static_cast<std::size_t>(N)), actions(static_cast<std::size_t>(N));
      ad::Mat<float> old_logp(N, 1), A(N, 1), Rt(N, 1);
      for (int q = 0; q < n; ++q) {
        const EnvBuffer& b = *ppo[envs[q]];
        h0.row(q) = b.start.main;
        for (int i = 0; i < L; ++i) {
          const int r = q * L + i;
          obs.row(r) = b.obs.row(i);
          goal.row(r) = b.goal.row(i);
          prev[r] = b.slots[i].prev_action;
          actions[r] = b.slots[i].action;
          old_logp(r, 0) = b.slots[i].logprob;
          A(r, 0) = static_cast<float>(adv[envs[q]][i]);
          Rt(r, 0) = static_cast<float>(ret[envs[q]][i]);
        }
      }
      Tape<float> t;
      const GruPrepared<float> g = GruPrepared<float>::bind(t, main_.gru);
      const auto [XG, XC] = g.project(main_.features(t, obs, goal, prev));
      const Var<float> H0 = t.constant(h0);
      std::vector<ad::RowRef<float>> cur(n), outs(static_cast<std::size_t>(N));
      for (int q = 0; q < n; ++q) cur[q] = {H0, q};
      for (int i = 0; i < L; ++i) {
        std::vector<ad::RowRef<float>> hin(n), xg(n), xc(n);
        for (int q = 0; q < n; ++q) {
          if (ppo[envs[q]]->slots[i].episode_start) cur[q] = {};
          hin[q] = cur[q];
          xg[q] = {XG, q * L + i};
          xc[q] = {XC, q * L + i};
        }
        const Var<float> hn =
            g.advance(ad::gather_rows(t, xg, 2 * H), ad::gather_rows(t, xc, H), ad::gather_rows(t, hin, H));
        for (int q = 0; q < n; ++q) {
          cur[q] = {hn, q};
          outs[q * L + i] = cur[q];
        }
      }
      const Var<float> r = ad::gather_rows(t, outs, H);
      const Var<float> logits = main_.logits(t, r);
      const Var<float> values = main_.values(t, r);
      const Var<float> logp_all = ad::log_softmax(logits);
      const Var<float> logp = ad::pick(logp_all, actions);
      const Var<float> ratio = ad::exp(ad::sub(logp, t.constant(old_logp)));
      const Var<float> adv_c = t.constant(A);
      const Var<float> surr = ad::minimum(ad::mul(ratio, adv_c),
                                          ad::mul(ad::clamp(ratio, float(1.0 - c.clip), float(1.0 + c.clip)), adv_c));
      const Var<float> policy = ad::scale(ad::mean(surr), -1.0f);
      const Var<float> value = ad::mean(ad::square(ad::sub(values, t.constant(Rt))));
      const Var<float> entropy =
          ad::scale(ad::mean(ad::row_sum(ad::mul(ad::softmax(logits), logp_all))), -1.0f);
      const Var<float> loss =
          ad::sub(ad::add(policy, ad::scale(value, float(c.value_coef))), ad::scale(entropy, float(c.entropy_coef)));
      if (!std::isfinite(loss.scalar())) throw NumericalError("ppo_update: non-finite loss");
      t.backward(loss);
      ad::adamw_step(store_, opt);
      const auto& rv = ratio.value();
      stats.clip_fraction +=
          static_cast<double>(((rv.array() - 1.0f).abs() > float(c.clip)).count()) / static_cast<double>(N);
      stats.policy += policy.scalar();
      stats.value += value.scalar();
      stats.entropy += entropy.scalar();
      ++updates;
    }
  }
  stats.policy /= updates;
  stats.value /= updates;
  stats.entropy /= updates;
  stats.clip_fraction /= updates;
  // Carries of PPO envs were produced by collection and stay as they are.
  return stats;
}

std::vector<Trainer::LogRow> Trainer::run_phase1(std::int64_t budget) {
  const std::int64_t per = static_cast<std::int64_t>(config_.envs) * config_.rollout_length;
  if (budget < per)
    throw ConfigError("phase 1 budget " + std::to_string(budget) + " is smaller than one buffer (" +
                      std::to_string(per) + " steps)");
  phase_ = 1;
  std::vector<LogRow> rows;
  const std::int64_t iterations = budget / per;
  for (std::int64_t it = 0; it < iterations; ++it) {
    int e0 = 0, s0 = 0;
    for (const auto& env : envs_) {
      e0 += env->episodes;
      s0 += env->successes;
    }
    std::vector<EnvBuffer> buffers = collect();
    LogRow row;
    row.phase = 1;
    row.iteration = static_cast<int>(it);
    const BcLosses l = bc_update(buffers);
    row.nav_loss = l.nav;
    row.bc_loss = l.bc;
    const PpoStats p = ppo_update(buffers);
    row.policy_loss = p.policy;
    row.value_loss = p.value;
    row.entropy = p.entropy;
    int e1 = 0, s1 = 0;
    for (const auto& env : envs_) {
      e1 += env->episodes;
      s1 += env->successes;
    }
    row.train_episodes = e1 - e0;
    row.train_success = row.train_episodes > 0 ? static_cast<double>(s1 - s0) / row.train_episodes : 0.0;
    row.env_steps = env_steps_;
    rows.push_back(row);
    if (on_log) on_log(row);
  }
  return rows;
}

double Trainer::validate_policy() {
  MainNet<float> net = main_;
  net.encoder_rows = nullptr;
  EvalOptions options;
  options.sensor = config_.sensor;
  options.kinematics = config_.kinematics;
  options.max_steps = config_.max_episode_steps;
  options.seed = 0x76616c;
  return aggregate(evaluate_policy(net, *val_maps_, val_episodes_, options)).success;
}

std::vector<Trainer::LogRow> Trainer::run_phase2(std::int64_t budget) {
  const std::int64_t per = static_cast<std::int64_t>(config_.envs) * config_.rollout_length;
  if (budget < per)
    throw ConfigError("phase 2 budget " + std::to_string(budget) + " is smaller than one buffer (" +
                      std::to_string(per) + " steps)");
  phase_ = 2;
  aux_.reset();
  Rng heads = Rng::derive(config_.seed, 2);
  main_.reinit_heads(heads);
  store_.reset_optimizer();
  spec_ = preset_spec(Preset::kA, config_.envs);
  set_roles(config_.envs, 0);

  const std::int64_t iterations = budget / per;
  const bool validate = !val_episodes_.empty() && config_.val_evals > 0;
  const std::int64_t every = validate ? std::max<std::int64_t>(1, iterations / config_.val_evals) : 0;
  std::optional<ad::ParamStore<float>> best;
  best_val_success_ = -1.0;
  std::vector<LogRow> rows;
  for (std::int64_t it = 0; it < iterations; ++it) {
    int e0 = 0, s0 = 0;
    for (const auto& env : envs_) {
      e0 += env->episodes;
      s0 += env->successes;
    }
    std::vector<EnvBuffer> buffers = collect();
    const PpoStats p = ppo_update(buffers);
    LogRow row;
    row.phase = 2;
    row.iteration = static_cast<int>(it);
    row.policy_loss = p.policy;
    row.value_loss = p.value;
    row.entropy = p.entropy;
    int e1 = 0, s1 = 0;
    for (const auto& env : envs_) {
      e1 += env->episodes;
      s1 += env->successes;
    }
    row.train_episodes = e1 - e0;
    row.train_success = row.train_episodes > 0 ? static_cast<double>(s1 - s0) / row.train_episodes : 0.0;
    row.env_steps = env_steps_;
    if (validate && ((it + 1) % every == 0 || it + 1 == iterations)) {
      row.val_success = validate_policy();
      if (row.val_success > best_val_success_) {
        best_val_success_ = row.val_success;
        best = store_;
      }
    }
    rows.push_back(row);
    if (on_log) on_log(row);
  }
  if (best) store_.assign_values(*best);
  return rows;
}

std::string log_csv_header() {
  return "phase,iteration,env_steps,nav_loss,bc_loss,policy_loss,value_loss,entropy,train_success,train_episodes,"
         "val_success";
}

std::string log_csv_row(const Trainer::LogRow& r) {
  std::ostringstream out;
  out << std::setprecision(9) << r.phase << ',' << r.iteration << ',' << r.env_steps << ',' << r.nav_loss << ','
      << r.bc_loss << ',' << r.policy_loss << ',' << r.value_loss << ',' << r.entropy << ',' << r.train_success << ','
      << r.train_episodes << ',';
  if (r.val_success >= 0.0) out << r.val_success;
  return out.str();
}

MoleRollout mole_closed_loop(const MainNet<float>& main, const AuxNet<float>& aux, const MapEntry& map,
                             const LongEpisode& episode, int subgoal, ContinuityVariant continuity,
                             const std::function<void(Observation&)>& perturb, int max_steps) {
  if (episode.waypoints.empty() || subgoal < 0 ||
      subgoal >= static_cast<int>(episode.waypoints.front().subgoals.size()))
    throw std::invalid_argument("mole_closed_loop: episode has no such subgoal at its first waypoint");
  const SensorConfig sensor;
  const Kinematics kin;
  Rng noise(0);
  const int H = main.dims.hidden;
  const DistanceField goal_field = distance_field(map.traversability, episode.goal);
  const double remaining = episode.gt_path_length - episode.waypoints.front().arc_length;

  MainNet<float> net = main;
  net.encoder_rows = nullptr;
  ad::Mat<float> r = ad::Mat<float>::Zero(1, H);
  int prev = kStartToken;
  bool collided = false;
  Pose pose = episode.start;
  auto main_update = [&](const Observation& o) {
    Tape<float> t(false);
    const MainStep<float> st = main_step(t, net, ad::Mat<float>(obs_features(o, sensor)),
                                         ad::Mat<float>(goal_features(o.goal)), {prev}, t.constant(r));
    r = st.r.value();
  };
  for (int k = 0; k < 500; ++k) {
    const Observation o = observe(map.grid, pose, episode.goal, sensor, NoiseConfig{}, noise, nullptr, collided);
    main_update(o);
    const Action a = expert_action(map.grid, pose, episode.goal, goal_field, kSuccessRadius, kin);
    const StepResult s = step(map.grid, pose, a, NoiseConfig{}, noise, kin);
    pose = s.pose;
    collided = s.collided;
    prev = static_cast<int>(a);
    if (a == Action::kStop) break;
    if (geodesic_distance(goal_field, pose.position()) <= remaining + 1e-9) break;
  }
  const ad::Mat<float> r_w = r;
  if (continuity == ContinuityVariant::kZeroAtWaypoint) r.setZero();
  if (continuity != ContinuityVariant::kContinue) prev = kStartToken;

  const Eigen::Vector2d target = episode.waypoints.front().subgoals[static_cast<std::size_t>(subgoal)].position;
  MoleRollout out;
  Tape<float> t(false);
  const Var<float> rv = t.constant(r_w);
  Var<float> h = aux_init(t, aux, rv);
  ad::Mat<float> hv = h.value();
  int mole_prev = kStartToken;
  collided = false;
  for (int k = 0; k < max_steps; ++k) {
    Observation o = observe(map.grid, pose, target, sensor, NoiseConfig{}, noise, nullptr, collided);
    if (perturb) perturb(o);
    main_update(o);
    Tape<float> ts(false);
    const AuxStep<float> st = aux_step(ts, aux, ts.constant(hv), ts.constant(r_w),
                                       ad::Mat<float>(goal_features(goal_vector(pose, target))), {mole_prev});
    hv = st.h.value();
    const int a = argmax_row(st.logits.value().row(0));
    out.actions.push_back(a);
    const StepResult s = step(map.grid, pose, static_cast<Action>(a), NoiseConfig{}, noise, kin);
    pose = s.pose;
    collided = s.collided;
    mole_prev = a;
    prev = a;
    if (a == static_cast<int>(Action::kStop)) break;
  }
  out.representation = r.row(0);
  return out;
}

}  // namespace navig
