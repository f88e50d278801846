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

#ifndef NAVIG_AGENTS_HPP
#define NAVIG_AGENTS_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "navig/autodiff.hpp"
#include "navig/episodes.hpp"
#include "navig/world.hpp"

namespace navig {

struct AgentDims {
  int rays = 64;
  int embed = 128;       // E, observation encoder width
  int goal = 64;         // goal / subgoal encoder width
  int action = 32;       // previous-action embedding width
  int hidden = 128;      // H, main recurrent state
  int aux_extra = 128;   // extra mole dimensions for CopyExtend

  int obs_features() const { return rays + 1; }  // normalized ranges + collision bit
  int gru_input() const { return embed + goal + action; }
  void validate() const;
};

nlohmann::json to_json(const AgentDims& d);
AgentDims agent_dims_from_json(const nlohmann::json& j);

enum class CommVariant { kAsObservation, kCopyInit, kCopyExtend };

std::string_view comm_name(CommVariant v);  // "e1", "e2", "e3"
CommVariant parse_comm(std::string_view name);

/// Mole hidden width implied by the communication variant.
int aux_hidden(const AgentDims& d, CommVariant v);

inline constexpr double kGoalDistanceScale = 5.0;  // meters

/// [ranges / d_max..., prev_collided].
Eigen::RowVectorXf obs_features(const Observation& obs, const SensorConfig& sensor);
/// [distance / 5 m, sin(bearing), cos(bearing)].
Eigen::RowVector3f goal_features(const GoalVector& g);

template <typename S>
using Var = ad::Var<S>;
template <typename S>
using Tape = ad::Tape<S>;
template <typename S>
using MatX = ad::Mat<S>;

/// GRU weights bound to a tape once, so that input projections can be
/// computed for whole sequences and only the recurrent part runs per step.
template <typename S>
struct GruPrepared {
  Var<S> w_gates, w_cand, b_gates, b_cand, wh_gates, wh_cand;
  Eigen::Index in = 0, hidden = 0;

  static GruPrepared bind(Tape<S>& t, const ad::GruCell<S>& cell) {
    GruPrepared g;
    g.in = cell.input();
    g.hidden = cell.hidden();
    g.w_gates = t.param(*cell.w_gates);
    g.w_cand = t.param(*cell.w_cand);
    g.b_gates = t.param(*cell.b_gates);
    g.b_cand = t.param(*cell.b_cand);
    g.wh_gates = ad::slice_rows(g.w_gates, g.in, g.hidden);
    g.wh_cand = ad::slice_rows(g.w_cand, g.in, g.hidden);
    return g;
  }

  /// Projection of input columns [offset, offset + x.cols()) without bias:
  /// returns (gate part [N x 2H], candidate part [N x H]).
  std::pair<Var<S>, Var<S>> project(Var<S> x, Eigen::Index offset = 0) const {
    return {ad::matmul(x, ad::slice_rows(w_gates, offset, x.cols())),
            ad::matmul(x, ad::slice_rows(w_cand, offset, x.cols()))};
  }

  /// One recurrent update from projected inputs.
  Var<S> advance(Var<S> xg, Var<S> xc, Var<S> h) const {
    const Var<S> gates = ad::sigmoid(ad::add_bias(ad::add(xg, ad::matmul(h, wh_gates)), b_gates));
    const Var<S> z = ad::slice_cols(gates, 0, hidden);
    const Var<S> r = ad::slice_cols(gates, hidden, hidden);
    const Var<S> cand = ad::tanh(ad::add_bias(ad::add(xc, ad::matmul(ad::mul(r, h), wh_cand)), b_cand));
    return ad::add(h, ad::mul(z, ad::sub(cand, h)));
  }
};

/// Main agent: observation encoder f, goal encoder, previous-action
/// embedding, GRU producing the representation r, policy and value heads.
template <typename S>
struct MainNet {
  AgentDims dims;
  ad::DenseLayer<S> enc1, enc2, goal, policy, value;
  ad::Parameter<S>* action_embed = nullptr;
  ad::GruCell<S> gru;
  std::int64_t* encoder_rows = nullptr;  // visual-exposure counter, optional

  static MainNet create(ad::ParamStore<S>& store, const AgentDims& d, Rng& rng) {
    d.validate();
    MainNet n;
    n.dims = d;
    n.enc1 = ad::make_dense(store, "main.enc1", d.obs_features(), d.embed, rng);
    n.enc2 = ad::make_dense(store, "main.enc2", d.embed, d.embed, rng);
    n.goal = ad::make_dense(store, "main.goal", 3, d.goal, rng);
    n.action_embed = &store.add("main.action_embed", ad::uniform_init<S>(kStartToken + 1, d.action, 1.0, rng));
    n.gru = ad::make_gru(store, "main.gru", d.gru_input(), d.hidden, rng);
    n.policy = ad::make_dense(store, "main.policy", d.hidden, kNumActions, rng);
    n.value = ad::make_dense(store, "main.value", d.hidden, 1, rng);
    return n;
  }

  static MainNet bind(ad::ParamStore<S>& store, const AgentDims& d) {
    MainNet n;
    n.dims = d;
    auto dense = [&](const std::string& name) { return ad::DenseLayer<S>{&store.get(name + ".w"), &store.get(name + ".b")}; };
    n.enc1 = dense("main.enc1");
    n.enc2 = dense("main.enc2");
    n.goal = dense("main.goal");
    n.policy = dense("main.policy");
    n.value = dense("main.value");
    n.action_embed = &store.get("main.action_embed");
    n.gru = {&store.get("main.gru.w_gates"), &store.get("main.gru.b_gates"), &store.get("main.gru.w_cand"),
             &store.get("main.gru.b_cand")};
    if (n.enc1.in() != d.obs_features() || n.gru.hidden() != d.hidden || n.gru.input() != d.gru_input())
      throw ArtifactError("main agent parameters do not match the configured dimensions");
    return n;
  }

  /// Fresh policy and value heads; everything else is kept.
  void reinit_heads(Rng& rng) {
    for (ad::DenseLayer<S>* layer : {&policy, &value}) {
      const double bound = std::sqrt(6.0 / static_cast<double>(layer->in() + layer->out()));
      layer->w->value = ad::uniform_init<S>(layer->in(), layer->out(), bound, rng);
      layer->b->value.setZero();
    }
  }

  /// GRU input rows [N x (E + 64 + 32)] for N observations.
  Var<S> features(Tape<S>& t, const MatX<S>& obs, const MatX<S>& goal_vec, const std::vector<int>& prev_actions) const {
    if (encoder_rows) *encoder_rows += obs.rows();
    const Var<S> e = ad::relu(enc2(t, ad::relu(enc1(t, t.constant(obs)))));
    const Var<S> g = goal(t, t.constant(goal_vec));
    const Var<S> a = ad::embedding(t.param(*action_embed), prev_actions);
    return ad::concat_cols<S>({e, g, a});
  }

  Var<S> logits(Tape<S>& t, Var<S> r) const { return policy(t, r); }
  Var<S> values(Tape<S>& t, Var<S> r) const { return value(t, r); }
};


template <typename S>
struct MainStep {
  Var<S> r, logits, value;
};

/// r = GRU([f(obs), enc(goal), emb(a_prev)], r_prev); logits and value from r.
template <typename S>
MainStep<S> main_step(Tape<S>& t, const MainNet<S>& net, const MatX<S>& obs, const MatX<S>& goal_vec,
                      const std::vector<int>& prev_actions, Var<S> r_prev) {
  if (!obs.allFinite() || !goal_vec.allFinite()) throw NumericalError("main_step: non-finite input");
  const GruPrepared<S> g = GruPrepared<S>::bind(t, net.gru);
  const auto [xg, xc] = g.project(net.features(t, obs, goal_vec, prev_actions));
  MainStep<S> out;
  out.r = g.advance(xg, xc, r_prev);
  out.logits = net.logits(t, out.r);
  out.value = net.values(t, out.r);
  return out;
}

/// Blind auxiliary agent: subgoal encoder, previous-action embedding and a
/// GRU. It has no observation input.
template <typename S>
struct AuxNet {
  AgentDims dims;
  CommVariant comm = CommVariant::kAsObservation;
  ad::DenseLayer<S> subgoal, policy;
  ad::Parameter<S>* action_embed = nullptr;
  ad::GruCell<S> gru;

  int hidden() const { return static_cast<int>(gru.hidden()); }
  int step_input() const { return dims.goal + dims.action; }

  static AuxNet create(ad::ParamStore<S>& store, const AgentDims& d, CommVariant comm, Rng& rng) {
    d.validate();
    AuxNet n;
    n.dims = d;
    n.comm = comm;
    const int in = d.goal + d.action + (comm == CommVariant::kAsObservation ? d.hidden : 0);
    n.subgoal = ad::make_dense(store, "aux.subgoal", 3, d.goal, rng);
    n.action_embed = &store.add("aux.action_embed", ad::uniform_init<S>(kStartToken + 1, d.action, 1.0, rng));
    n.gru = ad::make_gru(store, "aux.gru", in, aux_hidden(d, comm), rng);
    n.policy = ad::make_dense(store, "aux.policy", aux_hidden(d, comm), kNumActions, rng);
    return n;
  }

  static AuxNet bind(ad::ParamStore<S>& store, const AgentDims& d, CommVariant comm) {
    AuxNet n;
    n.dims = d;
    n.comm = comm;
    n.subgoal = {&store.get("aux.subgoal.w"), &store.get("aux.subgoal.b")};
    n.policy = {&store.get("aux.policy.w"), &store.get("aux.policy.b")};
    n.action_embed = &store.get("aux.action_embed");
    n.gru = {&store.get("aux.gru.w_gates"), &store.get("aux.gru.b_gates"), &store.get("aux.gru.w_cand"),
             &store.get("aux.gru.b_cand")};
    if (n.hidden() != aux_hidden(d, comm)) throw ArtifactError("mole parameters do not match the communication variant");
    return n;
  }

  /// Per-step inputs without the representation: [enc(subgoal), emb(a_prev)].
  Var<S> features(Tape<S>& t, const MatX<S>& subgoal_vec, const std::vector<int>& prev_actions) const {
    return ad::concat_cols<S>(
        {subgoal(t, t.constant(subgoal_vec)), ad::embedding(t.param(*action_embed), prev_actions)});
  }
};

/// Initial mole state from the representation r (one row per episode).
template <typename S>
Var<S> aux_init(Tape<S>& t, const AuxNet<S>& net, Var<S> r) {
  const Eigen::Index n = r.rows();
  switch (net.comm) {
    case CommVariant::kAsObservation:
      return t.constant(MatX<S>::Zero(n, net.hidden()));
    case CommVariant::kCopyInit:
      if (r.cols() != net.hidden())
        throw ad::ShapeError("aux_init: CopyInit needs H_aux == H, got " + std::to_string(net.hidden()) + " vs " +
                             std::to_string(r.cols()));
      return r;
    case CommVariant::kCopyExtend:
      if (r.cols() + net.dims.aux_extra != net.hidden())
        throw ad::ShapeError("aux_init: CopyExtend needs H_aux == H + extra");
      return ad::concat_cols<S>({r, t.constant(MatX<S>::Zero(n, net.dims.aux_extra))});
  }
  return r;
}

template <typename S>
struct AuxStep {
  Var<S> h, logits;
};

/// h' = GRU([enc(subgoal), emb(a_prev) (, r)], h); logits from h'.
template <typename S>
AuxStep<S> aux_step(Tape<S>& t, const AuxNet<S>& net, Var<S> h, Var<S> r, const MatX<S>& subgoal_vec,
                    const std::vector<int>& prev_actions) {
  const GruPrepared<S> g = GruPrepared<S>::bind(t, net.gru);
  Var<S> x = net.features(t, subgoal_vec, prev_actions);
  if (net.comm == CommVariant::kAsObservation) x = ad::concat_cols<S>({x, r});
  const auto [xg, xc] = g.project(x);
  AuxStep<S> out;
  out.h = g.advance(xg, xc, h);
  out.logits = net.policy(t, out.h);
  return out;
}

enum class ContinuityEvent { kWaypointSave, kShortEnd, kLongResume };

/// Bookkeeping of the main recurrent state across the long/short boundaries
/// of a step plan. `State` is any copyable value (a vector, a row handle).
template <typename State>
class ContinuityTracker {
 public:
  ContinuityTracker(ContinuityVariant variant, State zero) : variant_(variant), zero_(zero), current_(zero) {}

  const State& current() const { return current_; }
  void set_current(const State& s) { current_ = s; }
  const std::optional<State>& saved() const { return saved_; }
  ContinuityVariant variant() const { return variant_; }

  void reset() {
    current_ = zero_;
    saved_.reset();
  }

  void save() { saved_ = current_; }

  /// Applies a segment-start directive from the step plan.
  void apply(Directive d) {
    switch (d) {
      case Directive::kNone:
        break;
      case Directive::kZero:
        current_ = zero_;
        break;
      case Directive::kRestore:
        if (!saved_) throw std::logic_error("continuity: restore without a saved waypoint state");
        current_ = *saved_;
        break;
    }
  }

  /// Event form: the waypoint snapshot is taken before any reset.
  const State& on(ContinuityEvent e) {
    if (e == ContinuityEvent::kWaypointSave) {
      save();
      if (variant_ == ContinuityVariant::kZeroAtWaypoint) current_ = zero_;
      return current_;
    }
    apply(variant_ == ContinuityVariant::kZeroAtWaypoint    ? Directive::kZero
          : variant_ == ContinuityVariant::kRestoreWaypoint ? Directive::kRestore
                                                            : Directive::kNone);
    return current_;
  }

 private:
  ContinuityVariant variant_;
  State zero_;
  State current_;
  std::optional<State> saved_;
};

/// Stateless form of the continuity rule.
template <typename State>
State apply_continuity(ContinuityVariant variant, ContinuityEvent event, const State& current,
                       std::optional<State>& saved, const State& zero) {
  ContinuityTracker<State> t(variant, zero);
  t.set_current(current);
  if (saved) {
    const State keep = current;
    t.set_current(*saved);
    t.save();
    t.set_current(keep);
  }
  const State out = t.on(event);
  saved = t.saved();
  return out;
}

/// Greedy argmax with ties to the lowest index.
int argmax_row(const Eigen::Ref<const Eigen::RowVectorXf>& logits);

/// Samples from softmax(logits).
int sample_row(const Eigen::Ref<const Eigen::RowVectorXf>& logits, Rng& rng);

}  // namespace navig

#endif  // NAVIG_AGENTS_HPP
