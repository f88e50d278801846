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

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "navig/config.hpp"
#include "navig/errors.hpp"
#include "navig/experiment.hpp"
#include "navig/log.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitArtifact = 3;
constexpr int kExitNumerical = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "navig_ws";
  std::string preset;
  std::string continuity;
  std::string comm;
  bool noisy = false;
};

navig::RunConfig resolve(const Options& o) {
  navig::RunConfig c = o.config.empty() ? navig::RunConfig{} : navig::load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.preset.empty()) c.train.preset = navig::parse_preset(o.preset);
  if (!o.continuity.empty()) c.train.continuity = navig::parse_continuity(o.continuity);
  if (!o.comm.empty()) c.train.comm = navig::parse_comm(o.comm);
  c.resolve();
  return c;
}

void print(const nlohmann::json& manifest) { std::cout << manifest.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Navigability representation learning: maps, episodes, training, evaluation and probing"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "Run configuration (JSON)");
  app.add_option("--out", o.out, "Workspace directory")->capture_default_str();
  app.add_option("--seed", o.seed, "Seed of the run");
  app.add_option("--preset", o.preset, "Experiment preset")->check(CLI::IsMember({"a", "b", "c", "d", "e", "f", "g"}));
  app.add_option("--continuity", o.continuity, "Hidden-state continuity")->check(CLI::IsMember({"c1", "c2", "c3"}));
  app.add_option("--comm", o.comm, "Representation communication")->check(CLI::IsMember({"e1", "e2", "e3"}));
  app.add_flag("--noisy", o.noisy, "eval: score the noisy condition only");
  app.footer("Environment: NAVIG_LOG=error|warn|info|debug sets log verbosity.\n"
             "Exit codes: 0 success, 2 config error, 3 missing artifact, 4 numerical error.");

  auto* gen_maps = app.add_subcommand("gen-maps", "Generate train/val/test maps");
  auto* gen_episodes = app.add_subcommand("gen-episodes", "Sample evaluation, probing and mined episodes");
  auto* train = app.add_subcommand("train", "Train a preset (both phases)");
  auto* eval = app.add_subcommand("eval", "Evaluate a trained run on clean and noisy conditions");
  auto* probe = app.add_subcommand("probe", "Probe trained and untrained representations");
  auto* report = app.add_subcommand("report", "Aggregate every run into report.md and report.csv");
  auto* show = app.add_subcommand("config", "Print the resolved configuration");
  for (auto* sub : {gen_maps, gen_episodes, train, eval, probe, report, show}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const navig::RunConfig c = resolve(o);
    const navig::Workspace ws(o.out);
    if (*gen_maps) print(navig::gen_maps(c, ws));
    if (*gen_episodes) print(navig::gen_episodes(c, ws));
    if (*train) print(navig::train_run(c, ws).at("metrics"));
    if (*eval) print(navig::eval_run(c, ws, !o.noisy, true).at("metrics"));
    if (*probe) print(navig::probe_run(c, ws).at("metrics"));
    if (*report) std::cout << navig::write_report(ws);
    if (*show) print(navig::to_json(c));
    return kExitOk;
  } catch (const navig::ConfigError& e) {
    navig::log(navig::LogLevel::kError, e.what());
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    navig::log(navig::LogLevel::kError, std::string("config: ") + e.what());
    return kExitConfig;
  } catch (const navig::ArtifactError& e) {
    navig::log(navig::LogLevel::kError, e.what());
    return kExitArtifact;
  } catch (const navig::NumericalError& e) {
    navig::log(navig::LogLevel::kError, e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    navig::log(navig::LogLevel::kError, e.what());
    return 1;
  }
}
