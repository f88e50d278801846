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

#include "navig/config.hpp"

#include "navig/errors.hpp"
#include "navig/io_util.hpp"
#include "navig/map_io.hpp"

namespace navig {

namespace {

void reject_unknown(const nlohmann::json& j, const nlohmann::json& defaults, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

nlohmann::json probe_optim_json(const ProbeConfig& p) {
  return {{"hidden", p.hidden},         {"channels", p.channels}, {"lr", p.lr},
          {"weight_decay", p.weight_decay}, {"batch", p.batch},   {"max_epochs", p.max_epochs},
          {"patience", p.patience}};
}

}  // namespace

nlohmann::json to_json(const NoiseConfig& n) {
  return {{"obs_sigma", n.obs_sigma}, {"range_trunc", n.range_trunc}, {"act_noise_intensity", n.act_noise_intensity}};
}

NoiseConfig noise_from_json(const nlohmann::json& j) {
  NoiseConfig n;
  reject_unknown(j, to_json(n), "noise");
  read_key(j, "obs_sigma", n.obs_sigma);
  read_key(j, "range_trunc", n.range_trunc);
  read_key(j, "act_noise_intensity", n.act_noise_intensity);
  n.validate();
  return n;
}

void RunConfig::resolve() {
  if (schema_version != kRunSchemaVersion)
    throw ConfigError("config: schema_version " + std::to_string(schema_version) + " is not supported (expected " +
                      std::to_string(kRunSchemaVersion) + ")");
  train.seed = seed;
  probe.optim.seed = seed;
  if (maps.train < 1 || maps.val < 1 || maps.test < 1) throw ConfigError("maps: every split needs at least one map");
  if (episodes.test_per_map < 1 || episodes.probe_per_map < 1 || episodes.mined_per_map < 0)
    throw ConfigError("episodes: counts must be positive");
  if (eval.max_steps < 1) throw ConfigError("eval: max_steps must be >= 1");
  if (probe.map_size < 3 || probe.map_size % 2 == 0) throw ConfigError("probe: map_size must be odd and >= 3");
  if (!(probe.cell_size > 0.0) || probe.samples_per_episode < 1 || probe.sym_points < 1)
    throw ConfigError("probe: cell_size, samples_per_episode and sym_points must be positive");
  if (probe.optim.hidden < 1 || probe.optim.channels < 1 || probe.optim.batch < 1 || probe.optim.max_epochs < 1 ||
      probe.optim.patience < 0 || !(probe.optim.lr > 0.0) || probe.optim.weight_decay < 0.0)
    throw ConfigError("probe.optim: invalid value");
  eval.noisy.validate();
  train.validate();
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json train = to_json(c.train);
  train.erase("seed");
  return {
      {"schema_version", c.schema_version},
      {"seed", c.seed},
      {"maps",
       {{"train", c.maps.train},
        {"val", c.maps.val},
        {"test", c.maps.test},
        {"seed", c.maps.seed},
        {"params", to_json(c.maps.params)}}},
      {"episodes",
       {{"test_per_map", c.episodes.test_per_map},
        {"probe_per_map", c.episodes.probe_per_map},
        {"mined_per_map", c.episodes.mined_per_map},
        {"seed", c.episodes.seed}}},
      {"train", train},
      {"eval",
       {{"noisy", to_json(c.eval.noisy)},
        {"max_steps", c.eval.max_steps},
        {"greedy", c.eval.greedy},
        {"seed", c.eval.seed}}},
      {"probe",
       {{"map_size", c.probe.map_size},
        {"cell_size", c.probe.cell_size},
        {"samples_per_episode", c.probe.samples_per_episode},
        {"sym_points", c.probe.sym_points},
        {"pgm_samples", c.probe.pgm_samples},
        {"optim", probe_optim_json(c.probe.optim)}}},
  };
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  const nlohmann::json d = to_json(c);
  reject_unknown(j, d, "config");
  read_key(j, "schema_version", c.schema_version);
  if (c.schema_version != kRunSchemaVersion)
    throw ConfigError("config: schema_version " + std::to_string(c.schema_version) + " is not supported");
  read_key(j, "seed", c.seed);
  if (j.contains("maps")) {
    const auto& m = j.at("maps");
    reject_unknown(m, d.at("maps"), "maps");
    read_key(m, "train", c.maps.train);
    read_key(m, "val", c.maps.val);
    read_key(m, "test", c.maps.test);
    read_key(m, "seed", c.maps.seed);
    if (m.contains("params")) c.maps.params = map_params_from_json(m.at("params"));
  }
  if (j.contains("episodes")) {
    const auto& e = j.at("episodes");
    reject_unknown(e, d.at("episodes"), "episodes");
    read_key(e, "test_per_map", c.episodes.test_per_map);
    read_key(e, "probe_per_map", c.episodes.probe_per_map);
    read_key(e, "mined_per_map", c.episodes.mined_per_map);
    read_key(e, "seed", c.episodes.seed);
  }
  if (j.contains("train")) {
    if (j.at("train").contains("seed")) throw ConfigError("train: set the seed at the top level");
    c.train = train_config_from_json(j.at("train"));
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown(e, d.at("eval"), "eval");
    if (e.contains("noisy")) c.eval.noisy = noise_from_json(e.at("noisy"));
    read_key(e, "max_steps", c.eval.max_steps);
    read_key(e, "greedy", c.eval.greedy);
    read_key(e, "seed", c.eval.seed);
  }
  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    reject_unknown(p, d.at("probe"), "probe");
    read_key(p, "map_size", c.probe.map_size);
    read_key(p, "cell_size", c.probe.cell_size);
    read_key(p, "samples_per_episode", c.probe.samples_per_episode);
    read_key(p, "sym_points", c.probe.sym_points);
    read_key(p, "pgm_samples", c.probe.pgm_samples);
    if (p.contains("optim")) {
      const auto& o = p.at("optim");
      reject_unknown(o, d.at("probe").at("optim"), "probe.optim");
      read_key(o, "hidden", c.probe.optim.hidden);
      read_key(o, "channels", c.probe.optim.channels);
      read_key(o, "lr", c.probe.optim.lr);
      read_key(o, "weight_decay", c.probe.optim.weight_decay);
      read_key(o, "batch", c.probe.optim.batch);
      read_key(o, "max_epochs", c.probe.optim.max_epochs);
      read_key(o, "patience", c.probe.optim.patience);
    }
  }
  c.resolve();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  try {
    return run_config_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

}  // namespace navig
