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

#ifndef NAVIG_CONFIG_HPP
#define NAVIG_CONFIG_HPP

#include <cstdint>
#include <filesystem>

#include "json.hpp"
#include "navig/evalkit.hpp"
#include "navig/training.hpp"
#include "navig/world.hpp"

namespace navig {

inline constexpr int kRunSchemaVersion = 1;

struct MapsSection {
  int train = 64;
  int val = 8;
  int test = 16;
  std::uint64_t seed = 1000;  // map i of the concatenated splits uses seed + i
  MapParams params;
};

struct EpisodesSection {
  int test_per_map = 10;
  int probe_per_map = 5;
  int mined_per_map = 2;  // mined training episodes kept for inspection
  std::uint64_t seed = 2000;
};

struct EvalSection {
  NoiseConfig noisy = noisy_eval_config();
  int max_steps = 500;
  bool greedy = false;
  std::uint64_t seed = 5;
};

struct ProbeSection {
  int map_size = 33;
  double cell_size = 0.2;
  int samples_per_episode = 20;
  int sym_points = 10;
  int pgm_samples = 4;
  ProbeConfig optim;
};

/// Everything a command needs. `seed` overrides the training seed.
struct RunConfig {
  int schema_version = kRunSchemaVersion;
  std::uint64_t seed = 1;
  MapsSection maps;
  EpisodesSection episodes;
  TrainConfig train;
  EvalSection eval;
  ProbeSection probe;

  /// Copies the top-level seed into the sections and validates everything.
  void resolve();
};

nlohmann::json to_json(const NoiseConfig& n);
NoiseConfig noise_from_json(const nlohmann::json& j);

/// Fully resolved form, every default explicit.
nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys and a foreign schema
/// version throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace navig

#endif  // NAVIG_CONFIG_HPP
