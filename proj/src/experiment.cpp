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

#include "navig/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "navig/checkpoint.hpp"
#include "navig/errors.hpp"
#include "navig/evalkit.hpp"
#include "navig/io_util.hpp"
#include "navig/log.hpp"
#include "navig/map_io.hpp"

namespace navig {

namespace fs = std::filesystem;

namespace {

constexpr const char* kSplits[3] = {"train", "val", "test"};

nlohmann::json read_artifact_json(const fs::path& path) {
  if (!fs::exists(path)) throw ArtifactError("missing artifact: " + path.string());
  const nlohmann::json j = read_json(path);
  if (j.value("schema_version", -1) != kRunSchemaVersion)
    throw ArtifactError(path.string() + ": schema version mismatch");
  return j;
}

void verify(const fs::path& path, const std::string& checksum) {
  if (!fs::exists(path)) throw ArtifactError("missing artifact: " + path.string());
  const std::string actual = file_checksum(path);
  if (actual != checksum)
    throw ArtifactError("checksum mismatch for " + path.string() + " (expected " + checksum + ", found " + actual + ")");
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

nlohmann::json aggregate_json(const Aggregate& a) {
  return {{"episodes", a.episodes},
          {"success", a.success},
          {"spl", a.spl},
          {"soft_spl", a.soft_spl},
          {"mean_steps", a.mean_steps}};
}

std::vector<LongEpisode> sample_split(const MapSet& maps, int per_map, Rng rng) {
  std::vector<LongEpisode> out;
  for (int k = 0; k < per_map; ++k)
    for (const MapEntry& m : maps) {
      out.push_back(sample_long_episode(m.traversability, m.id, rng));
      out.back().waypoints.clear();
    }
  return out;
}

MainNet<float> bind_main(ad::ParamStore<float>& store, const RunConfig& c) {
  return MainNet<float>::bind(store, c.train.dims);
}

}  // namespace

std::string run_tag(const RunConfig& c) {
  return std::string(1, preset_letter(c.train.preset)) + "-" + std::string(continuity_name(c.train.continuity)) + "-" +
         std::string(comm_name(c.train.comm)) + "-s" + std::to_string(c.seed);
}

nlohmann::json gen_maps(const RunConfig& c, const Workspace& ws) {
  const int counts[3] = {c.maps.train, c.maps.val, c.maps.test};
  nlohmann::json index = {{"schema_version", kRunSchemaVersion},
                          {"kind", "maps"},
                          {"seed", c.maps.seed},
                          {"params", to_json(c.maps.params)},
                          {"splits", nlohmann::json::object()}};
  std::uint64_t seed = c.maps.seed;
  for (int s = 0; s < 3; ++s) {
    nlohmann::json entries = nlohmann::json::array();
    for (int i = 0; i < counts[s]; ++i, ++seed) {
      char id[32];
      std::snprintf(id, sizeof id, "%s-%03d", kSplits[s], i);
      const fs::path file = fs::path(kSplits[s]) / (std::string(id) + ".pgm");
      save_map(ws.maps_dir() / file, generate_map(seed, c.maps.params), c.maps.params);
      entries.push_back({{"id", id}, {"seed", seed}, {"file", file.string()}, {"checksum", file_checksum(ws.maps_dir() / file)}});
    }
    index["splits"][kSplits[s]] = entries;
    log_info(std::string("gen-maps: ") + kSplits[s] + " " + std::to_string(counts[s]) + " maps");
  }
  write_json(ws.maps_dir() / "index.json", index);
  return index;
}

MapSplits load_maps(const Workspace& ws) {
  const nlohmann::json index = read_artifact_json(ws.maps_dir() / "index.json");
  MapSplits out;
  MapSet* sets[3] = {&out.train, &out.val, &out.test};
  for (int s = 0; s < 3; ++s)
    for (const auto& e : index.at("splits").at(kSplits[s])) {
      const fs::path file = ws.maps_dir() / e.at("file").get<std::string>();
      verify(file, e.at("checksum").get<std::string>());
      sets[s]->push_back(make_map_entry(e.at("id").get<std::string>(), load_map(file).grid));
    }
  check_disjoint([&] {
    std::vector<std::string> ids;
    for (const auto& m : out.train) ids.push_back(m.id);
    return ids;
  }(), [&] {
    std::vector<std::string> ids;
    for (const auto* set : {&out.val, &out.test})
      for (const auto& m : *set) ids.push_back(m.id);
    return ids;
  }());
  return out;
}

nlohmann::json gen_episodes(const RunConfig& c, const Workspace& ws) {
  const MapSplits maps = load_maps(ws);
  const std::uint64_t seed = c.episodes.seed;
  std::map<std::string, std::vector<LongEpisode>> sets;
  sets["test"] = sample_split(maps.test, c.episodes.test_per_map, Rng::derive(seed, 0));
  sets["probe_train"] = sample_split(maps.train, c.episodes.probe_per_map, Rng::derive(seed, 1));
  sets["probe_val"] = sample_split(maps.val, c.episodes.probe_per_map, Rng::derive(seed, 2));
  sets["probe_test"] = sample_split(maps.test, c.episodes.probe_per_map, Rng::derive(seed, 3));
  std::vector<LongEpisode>& mined = sets["mined"];
  Rng rng = Rng::derive(seed, 4);
  for (int k = 0; k < c.episodes.mined_per_map; ++k)
    for (const MapEntry& m : maps.train) {
      mined.push_back(sample_long_episode(m.traversability, m.id, rng, c.train.constraints,
                                          c.train.mining.waypoint_spacing));
      mine_episode(m.traversability, mined.back(), c.train.mining);
    }
  nlohmann::json index = {{"schema_version", kRunSchemaVersion},
                          {"kind", "episodes"},
                          {"maps_index", file_checksum(ws.maps_dir() / "index.json")},
                          {"sets", nlohmann::json::object()}};
  for (const auto& [name, eps] : sets) {
    const fs::path file = ws.episodes_dir() / (name + ".jsonl");
    write_episodes(file, eps, c.train.mining);
    index["sets"][name] = {{"count", eps.size()}, {"checksum", file_checksum(file)}};
    log_info("gen-episodes: " + name + " " + std::to_string(eps.size()));
  }
  write_json(ws.episodes_dir() / "index.json", index);
  return index;
}

std::vector<LongEpisode> load_episodes(const Workspace& ws, const std::string& name) {
  const nlohmann::json index = read_artifact_json(ws.episodes_dir() / "index.json");
  if (!index.at("sets").contains(name)) throw ArtifactError("episode set '" + name + "' not found");
  const fs::path file = ws.episodes_dir() / (name + ".jsonl");
  verify(file, index.at("sets").at(name).at("checksum").get<std::string>());
  return read_episodes(file);
}

nlohmann::json train_run(const RunConfig& c, const Workspace& ws,
                         const std::function<void(const Trainer::LogRow&)>& on_log) {
  const MapSplits maps = load_maps(ws);
  const fs::path dir = ws.run_dir(run_tag(c));
  Trainer trainer(c.train, &maps.train, &maps.val);
  std::string log = log_csv_header() + "\n";
  trainer.on_log = [&](const Trainer::LogRow& row) {
    log += log_csv_row(row) + "\n";
    if (row.iteration % 100 == 0 || row.val_success >= 0.0) log_info("train " + run_tag(c) + ": " + log_csv_row(row));
    if (on_log) on_log(row);
  };
  if (c.train.phase1_steps > 0) trainer.run_phase1(c.train.phase1_steps);
  if (c.train.phase2_steps > 0) trainer.run_phase2(c.train.phase2_steps);

  write_json(dir / "config.json", to_json(c));
  save_checkpoint(dir / "checkpoint.bin", trainer.store(), false);
  write_file_atomic(dir / "log.csv", log);
  const nlohmann::json manifest = {
      {"schema_version", kRunSchemaVersion},
      {"command", "train"},
      {"tag", run_tag(c)},
      {"seed", c.seed},
      {"config", to_json(c)},
      {"artifacts",
       {{"maps_index", file_checksum(ws.maps_dir() / "index.json")},
        {"config.json", file_checksum(dir / "config.json")},
        {"checkpoint.bin", file_checksum(dir / "checkpoint.bin")},
        {"log.csv", file_checksum(dir / "log.csv")}}},
      {"metrics",
       {{"best_val_success", trainer.best_val_success()},
        {"env_steps", trainer.env_steps()},
        {"encoder_rows", trainer.encoder_rows()}}},
  };
  write_json(dir / "manifest.json", manifest);
  return manifest;
}

ad::ParamStore<float> load_run_checkpoint(const RunConfig& c, const Workspace& ws) {
  const fs::path dir = ws.run_dir(run_tag(c));
  const nlohmann::json manifest = read_artifact_json(dir / "manifest.json");
  verify(dir / "checkpoint.bin", manifest.at("artifacts").at("checkpoint.bin").get<std::string>());
  return read_checkpoint(dir / "checkpoint.bin");
}

nlohmann::json eval_run(const RunConfig& c, const Workspace& ws, bool clean, bool noisy) {
  const MapSplits maps = load_maps(ws);
  const std::vector<LongEpisode> episodes = load_episodes(ws, "test");
  ad::ParamStore<float> store = load_run_checkpoint(c, ws);
  const MainNet<float> net = bind_main(store, c);
  const fs::path dir = ws.run_dir(run_tag(c));
  EvalOptions o;
  o.sensor = c.train.sensor;
  o.kinematics = c.train.kinematics;
  o.max_steps = c.eval.max_steps;
  o.greedy = c.eval.greedy;
  o.seed = c.eval.seed;
  nlohmann::json manifest = {{"schema_version", kRunSchemaVersion},
                             {"command", "eval"},
                             {"tag", run_tag(c)},
                             {"seed", c.seed},
                             {"config", to_json(c)},
                             {"artifacts", {{"checkpoint.bin", file_checksum(dir / "checkpoint.bin")}}},
                             {"metrics", nlohmann::json::object()}};
  auto run = [&](const char* name, const NoiseConfig& noise) {
    o.noise = noise;
    const std::vector<EpisodeResult> results = evaluate_policy(net, maps.test, episodes, o);
    const std::string file = std::string("eval_") + name + ".csv";
    write_results_csv(dir / file, results);
    manifest["artifacts"][file] = file_checksum(dir / file);
    manifest["metrics"][name] = aggregate_json(aggregate(results));
    log_info("eval " + run_tag(c) + " " + name + ": " + manifest["metrics"][name].dump());
  };
  if (clean) run("clean", NoiseConfig{});
  if (noisy) run("noisy", c.eval.noisy);
  write_json(dir / "eval.json", manifest);
  return manifest;
}

nlohmann::json probe_run(const RunConfig& c, const Workspace& ws) {
  const MapSplits maps = load_maps(ws);
  const std::vector<LongEpisode> tr = load_episodes(ws, "probe_train");
  const std::vector<LongEpisode> va = load_episodes(ws, "probe_val");
  const std::vector<LongEpisode> te = load_episodes(ws, "probe_test");
  ad::ParamStore<float> trained_store = load_run_checkpoint(c, ws);
  ad::ParamStore<float> random_store;
  Rng init = Rng::derive(c.seed, 0x70726f6265);
  const MainNet<float> random_net = MainNet<float>::create(random_store, c.train.dims, init);
  const MainNet<float> trained_net = bind_main(trained_store, c);
  const fs::path dir = ws.run_dir(run_tag(c));
  const ProbeSection& p = c.probe;

  nlohmann::json manifest = {{"schema_version", kRunSchemaVersion},
                             {"command", "probe"},
                             {"tag", run_tag(c)},
                             {"seed", c.seed},
                             {"config", to_json(c)},
                             {"artifacts", {{"checkpoint.bin", file_checksum(dir / "checkpoint.bin")}}},
                             {"metrics", nlohmann::json::object()}};
  auto run = [&](const char* name, const MainNet<float>& net, bool images) {
    const ProbeDataset dtr = collect_probe_dataset(net, maps.train, tr, p.samples_per_episode, p.map_size, p.cell_size,
                                                   c.train.sensor);
    const ProbeDataset dva = collect_probe_dataset(net, maps.val, va, p.samples_per_episode, p.map_size, p.cell_size,
                                                   c.train.sensor);
    const ProbeDataset dte = collect_probe_dataset(net, maps.test, te, p.samples_per_episode, p.map_size, p.cell_size,
                                                   c.train.sensor);
    check_disjoint(dtr.map_ids, dte.map_ids);
    check_disjoint(dtr.map_ids, dva.map_ids);
    check_disjoint(dva.map_ids, dte.map_ids);
    ProbeReport report;
    const Probe probe = train_probe(dtr, dva, p.optim, &report);
    const ProbeScores s = score_probe(probe, dte, p.sym_points, c.seed);
    manifest["metrics"][name] = {{"iou", s.iou},
                                 {"sym_spl", s.sym_spl},
                                 {"samples", s.samples},
                                 {"best_epoch", report.best_epoch},
                                 {"best_val_loss", report.best_val_loss},
                                 {"epochs", report.val_loss.size()}};
    log_info(std::string("probe ") + run_tag(c) + " " + name + ": " + manifest["metrics"][name].dump());
    if (!images) return;
    for (int i = 0; i < std::min(p.pgm_samples, dte.size()); ++i) {
      const std::string gt = "probe_gt_" + std::to_string(i) + ".pgm";
      const std::string pred = "probe_pred_" + std::to_string(i) + ".pgm";
      write_file_atomic(dir / gt, ego_pgm(dte.map(i)));
      write_file_atomic(dir / pred, ego_pgm(probe.predict(dte.representations.row(i))));
      manifest["artifacts"][gt] = file_checksum(dir / gt);
      manifest["artifacts"][pred] = file_checksum(dir / pred);
    }
  };
  run("trained", trained_net, true);
  run("random", random_net, false);
  write_json(dir / "probe.json", manifest);
  return manifest;
}

std::string write_report(const Workspace& ws) {
  const fs::path runs = ws.root() / "runs";
  if (!fs::exists(runs)) throw ArtifactError("missing artifact: " + runs.string());
  struct Group {
    std::vector<double> clean_success, clean_spl, noisy_success, noisy_spl, probe_trained, probe_random;
    std::vector<std::uint64_t> seeds;
  };
  std::map<std::string, Group> groups;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(runs))
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const fs::path& dir : dirs) {
    const nlohmann::json m = read_json(dir / "manifest.json");
    if (m.value("schema_version", -1) != kRunSchemaVersion)
      throw ConfigError("report: " + dir.string() + " has schema version " +
                        std::to_string(m.value("schema_version", -1)) + ", refusing to mix versions");
    const std::string tag = m.at("tag").get<std::string>();
    Group& g = groups[tag.substr(0, tag.rfind("-s"))];
    g.seeds.push_back(m.at("seed").get<std::uint64_t>());
    if (fs::exists(dir / "eval.json")) {
      const nlohmann::json e = read_artifact_json(dir / "eval.json");
      const auto& met = e.at("metrics");
      if (met.contains("clean")) {
        g.clean_success.push_back(met["clean"]["success"].get<double>());
        g.clean_spl.push_back(met["clean"]["spl"].get<double>());
      }
      if (met.contains("noisy")) {
        g.noisy_success.push_back(met["noisy"]["success"].get<double>());
        g.noisy_spl.push_back(met["noisy"]["spl"].get<double>());
      }
    }
    if (fs::exists(dir / "probe.json")) {
      const nlohmann::json pr = read_artifact_json(dir / "probe.json");
      g.probe_trained.push_back(pr.at("metrics").at("trained").at("sym_spl").get<double>());
      g.probe_random.push_back(pr.at("metrics").at("random").at("sym_spl").get<double>());
    }
  }
  auto cell = [](const std::vector<double>& v) {
    if (v.empty()) return std::string("-");
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f ± %.1f", 100.0 * mean, 100.0 * sd);
    return std::string(buf);
  };
  auto mean_of = [](const std::vector<double>& v) {
    if (v.empty()) return std::string();
    double mean = 0.0;
    for (double x : v) mean += x;
    std::ostringstream s;
    s.precision(6);
    s << mean / static_cast<double>(v.size());
    return s.str();
  };
  std::ostringstream md, csv;
  md << "| run | seeds | Success | SPL | Noisy Success | Noisy SPL | Probe Sym-SPL | Random Sym-SPL |\n"
     << "|---|---|---|---|---|---|---|---|\n";
  csv << "run,seeds,success,spl,noisy_success,noisy_spl,probe_sym_spl,random_sym_spl\n";
  for (const auto& [key, g] : groups) {
    md << "| " << key << " | " << g.seeds.size() << " | " << cell(g.clean_success) << " | " << cell(g.clean_spl)
       << " | " << cell(g.noisy_success) << " | " << cell(g.noisy_spl) << " | " << cell(g.probe_trained) << " | "
       << cell(g.probe_random) << " |\n";
    csv << key << ',' << g.seeds.size() << ',' << mean_of(g.clean_success) << ',' << mean_of(g.clean_spl) << ','
        << mean_of(g.noisy_success) << ',' << mean_of(g.noisy_spl) << ',' << mean_of(g.probe_trained) << ','
        << mean_of(g.probe_random) << '\n';
  }
  write_file_atomic(ws.root() / "report.md", md.str());
  write_file_atomic(ws.root() / "report.csv", csv.str());
  return md.str();
}

}  // namespace navig
