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

#include "navig/agents.hpp"

#include <algorithm>

namespace navig {

void AgentDims::validate() const {
  if (rays < 1 || embed < 1 || goal < 1 || action < 1 || hidden < 1 || aux_extra < 0)
    throw ConfigError("agent dimensions must be positive");
}

nlohmann::json to_json(const AgentDims& d) {
  return {{"rays", d.rays},     {"embed", d.embed},   {"goal", d.goal},
          {"action", d.action}, {"hidden", d.hidden}, {"aux_extra", d.aux_extra}};
}

AgentDims agent_dims_from_json(const nlohmann::json& j) {
  AgentDims d;
  const nlohmann::json defaults = to_json(d);
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw ConfigError("unknown agent parameter '" + key + "'");
  d.rays = j.value("rays", d.rays);
  d.embed = j.value("embed", d.embed);
  d.goal = j.value("goal", d.goal);
  d.action = j.value("action", d.action);
  d.hidden = j.value("hidden", d.hidden);
  d.aux_extra = j.value("aux_extra", d.aux_extra);
  d.validate();
  return d;
}

std::string_view comm_name(CommVariant v) {
  switch (v) {
    case CommVariant::kAsObservation:
      return "e1";
    case CommVariant::kCopyInit:
      return "e2";
    case CommVariant::kCopyExtend:
      return "e3";
  }
  return "?";
}

CommVariant parse_comm(std::string_view name) {
  if (name == "e1") return CommVariant::kAsObservation;
  if (name == "e2") return CommVariant::kCopyInit;
  if (name == "e3") return CommVariant::kCopyExtend;
  throw ConfigError("unknown communication variant '" + std::string(name) + "' (expected e1, e2 or e3)");
}

int aux_hidden(const AgentDims& d, CommVariant v) {
  return v == CommVariant::kCopyExtend ? d.hidden + d.aux_extra : d.hidden;
}

Eigen::RowVectorXf obs_features(const Observation& obs, const SensorConfig& sensor) {
  Eigen::RowVectorXf f(obs.ranges.size() + 1);
  for (Eigen::Index i = 0; i < obs.ranges.size(); ++i)
    f[i] = static_cast<float>(std::clamp(obs.ranges[i] / sensor.max_range, 0.0, 1.0));
  f[obs.ranges.size()] = obs.prev_collided ? 1.0f : 0.0f;
  return f;
}

Eigen::RowVector3f goal_features(const GoalVector& g) {
  return {static_cast<float>(g.distance / kGoalDistanceScale), static_cast<float>(std::sin(g.bearing)),
          static_cast<float>(std::cos(g.bearing))};
}

int argmax_row(const Eigen::Ref<const Eigen::RowVectorXf>& logits) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<int>(best);
}

int sample_row(const Eigen::Ref<const Eigen::RowVectorXf>& logits, Rng& rng) {
  const float m = logits.maxCoeff();
  double p[8];
  const auto n = static_cast<std::size_t>(logits.size());
  for (std::size_t i = 0; i < n; ++i) p[i] = std::exp(static_cast<double>(logits[static_cast<Eigen::Index>(i)] - m));
  return static_cast<int>(rng.categorical(std::span<const double>(p, n)));
}

}  // namespace navig
