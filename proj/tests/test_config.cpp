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

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "navig/config.hpp"
#include "navig/experiment.hpp"
#include "navig/io_util.hpp"
#include "train_support.hpp"

using namespace navig;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("navig_test_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig tiny_run() {
  RunConfig c;
  c.maps.train = 2;
  c.maps.val = 1;
  c.maps.test = 1;
  c.episodes.test_per_map = 2;
  c.episodes.probe_per_map = 1;
  c.episodes.mined_per_map = 1;
  c.train = testing::tiny_config(Preset::kE);
  c.train.rollout_length = 16;
  c.train.phase1_steps = 4 * 16;
  c.train.phase2_steps = 4 * 16;
  c.resolve();
  return c;
}

}  // namespace

TEST_CASE("run config json round trip") {
  RunConfig c;
  c.seed = 7;
  c.maps.train = 5;
  c.eval.noisy.obs_sigma = 0.25;
  c.train.preset = Preset::kG;
  c.train.comm = CommVariant::kCopyExtend;
  c.resolve();
  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.train.seed == 7);
  CHECK(back.probe.optim.seed == 7);
}

TEST_CASE("run config rejects malformed input") {
  nlohmann::json j = to_json(RunConfig{});
  SUBCASE("unknown key") {
    j["maps"]["trian"] = 3;
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  }
  SUBCASE("schema version") {
    j["schema_version"] = kRunSchemaVersion + 1;
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  }
  SUBCASE("seed inside train") {
    j["train"]["seed"] = 3;
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  }
  SUBCASE("negative noise") {
    j["eval"]["noisy"]["obs_sigma"] = -1.0;
    CHECK_THROWS_AS(run_config_from_json(j), std::exception);
  }
}

TEST_CASE("load_run_config reports missing and unparsable files") {
  const fs::path dir = scratch("cfg");
  fs::create_directories(dir);
  CHECK_THROWS_AS(load_run_config(dir / "absent.json"), ConfigError);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("run tag names preset, variants and seed") {
  RunConfig c;
  c.seed = 3;
  c.train.preset = Preset::kB;
  c.train.continuity = ContinuityVariant::kZeroAtWaypoint;
  c.train.comm = CommVariant::kCopyInit;
  CHECK(run_tag(c) == "b-c1-e2-s3");
}

TEST_CASE("workspace artifacts are checksummed") {
  const Workspace ws(scratch("ws"));
  const RunConfig c = tiny_run();
  CHECK_THROWS_AS(load_maps(ws), ArtifactError);
  gen_maps(c, ws);
  const MapSplits splits = load_maps(ws);
  CHECK(splits.train.size() == 2);
  CHECK(splits.val.size() == 1);
  CHECK(splits.test.size() == 1);
  CHECK_THROWS_AS(load_episodes(ws, "test"), ArtifactError);
  gen_episodes(c, ws);
  CHECK(load_episodes(ws, "test").size() == 2);

  fs::path victim;
  for (const auto& e : fs::recursive_directory_iterator(ws.maps_dir()))
    if (e.path().extension() == ".pgm") victim = e.path();
  REQUIRE(!victim.empty());
  std::string bytes = read_file(victim);
  bytes.back() = static_cast<char>(bytes.back() ^ 1);
  write_file_atomic(victim, bytes);
  CHECK_THROWS_AS(load_maps(ws), ArtifactError);
  fs::remove_all(ws.root());
}

TEST_CASE("report refuses mixed schema versions") {
  const Workspace ws(scratch("report"));
  const RunConfig c = tiny_run();
  CHECK_THROWS_AS(write_report(ws), ArtifactError);
  gen_maps(c, ws);
  gen_episodes(c, ws);
  train_run(c, ws);
  eval_run(c, ws);
  const std::string report = write_report(ws);
  CHECK(report.find("e-c3-e1") != std::string::npos);

  const fs::path manifest = ws.run_dir(run_tag(c)) / "manifest.json";
  nlohmann::json m = nlohmann::json::parse(read_file(manifest));
  m["schema_version"] = kRunSchemaVersion + 1;
  write_file_atomic(manifest, m.dump());
  CHECK_THROWS_AS(write_report(ws), ConfigError);
  fs::remove_all(ws.root());
}
