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

#ifndef NAVIG_EXPERIMENT_HPP
#define NAVIG_EXPERIMENT_HPP

#include <filesystem>
#include <functional>
#include <string>

#include "json.hpp"
#include "navig/config.hpp"
#include "navig/training.hpp"

namespace navig {

/// Directory layout of an experiment workspace:
///   maps/<split>/<id>.pgm, maps/index.json
///   episodes/{test,probe_train,probe_val,probe_test,mined}.jsonl, episodes/index.json
///   runs/<tag>/{config.json, checkpoint.bin, log.csv, manifest.json,
///               eval_clean.csv, eval_noisy.csv, eval.json, probe.json, probe_*.pgm}
///   report.md, report.csv
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path maps_dir() const { return root_ / "maps"; }
  std::filesystem::path episodes_dir() const { return root_ / "episodes"; }
  std::filesystem::path run_dir(const std::string& tag) const { return root_ / "runs" / tag; }

 private:
  std::filesystem::path root_;
};

/// "<preset>-<continuity>-<comm>-s<seed>", e.g. "e-c3-e1-s1".
std::string run_tag(const RunConfig& c);

struct MapSplits {
  MapSet train;
  MapSet val;
  MapSet test;
};

/// Each command returns the manifest it wrote.
nlohmann::json gen_maps(const RunConfig& c, const Workspace& ws);
/// Verifies every map against the checksums of maps/index.json.
MapSplits load_maps(const Workspace& ws);

nlohmann::json gen_episodes(const RunConfig& c, const Workspace& ws);
std::vector<LongEpisode> load_episodes(const Workspace& ws, const std::string& name);

nlohmann::json train_run(const RunConfig& c, const Workspace& ws,
                         const std::function<void(const Trainer::LogRow&)>& on_log = {});

/// Restores the trained main network of a run after checking its checksum.
ad::ParamStore<float> load_run_checkpoint(const RunConfig& c, const Workspace& ws);

nlohmann::json eval_run(const RunConfig& c, const Workspace& ws, bool clean = true, bool noisy = true);

/// Probes the trained encoder and an untrained encoder of the same shape.
nlohmann::json probe_run(const RunConfig& c, const Workspace& ws);

/// Aggregates every run manifest into report.md and report.csv and returns
/// the markdown table.
std::string write_report(const Workspace& ws);

}  // namespace navig

#endif  // NAVIG_EXPERIMENT_HPP
