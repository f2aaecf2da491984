// Copyright 2026 The TrialMesh Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "trialmesh/algorithms.hpp"
#include "trialmesh/client.hpp"
#include "trialmesh/datastore.hpp"
#include "trialmesh/manifest.hpp"
#include "trialmesh/net.hpp"
#include "trialmesh/orchestrator.hpp"

// Subcommand implementations behind the `trialmesh` binary.
namespace trialmesh::cli {

namespace fs = std::filesystem;

inline constexpr const char* kFixedTimestamp = "1970-01-01T00:00:00Z";

// --data-dir, then TRIALMESH_DATA_DIR, then <project>/data.
inline fs::path resolve_data_dir(const std::optional<fs::path>& flag, const fs::path& project_dir) {
  if (flag) return *flag;
  if (const char* env = std::getenv("TRIALMESH_DATA_DIR"); env && *env) return env;
  return project_dir / "data";
}

// Explicit --config, else ./trialmesh.json when present, else defaults.
inline std::pair<ProjectManifest, fs::path> resolve_manifest(const std::optional<fs::path>& config) {
  if (config) {
    auto dir = config->parent_path();
    return {load_manifest(*config), dir.empty() ? fs::path(".") : dir};
  }
  if (fs::exists(kManifestFile)) return {load_manifest(kManifestFile), fs::path(".")};
  return {ProjectManifest{}, fs::path(".")};
}

// ---- init ------------------------------------------------------------------

inline std::string readme_stub(const ProjectManifest& m) {
  return "# " + m.name +
         "\n\n"
         "Created by `trialmesh init`. Settings live in `trialmesh.json`:\n\n"
         "- `name`: project name.\n"
         "- `trial`: trial defaults. `n_agents` learning drones, `include_human` adds one human seat,\n"
         "  `max_ticks` caps a trial, `tick_deadline_ms` is how long a tick waits for actions before\n"
         "  substituting `Stay`, `seed` fixes the target layout, `env_spec` sets the grid\n"
         "  (`width`, `height`, `n_targets`, `step_cost`, `target_reward`, `max_ticks`).\n"
         "- `algorithm`: one of `dqn`, `ddqn`, `d3maddpg`, `mixed-critic`.\n"
         "- `hyperparameters`: learner settings; keys you delete fall back to the defaults.\n\n"
         "Typical session:\n\n"
         "    trialmesh serve --config trialmesh.json\n"
         "    trialmesh train --config trialmesh.json --seed 1 --episodes 200\n"
         "    trialmesh export --all --out dataset.jsonl\n";
}

inline void cmd_init(const fs::path& dir, std::ostream& out) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir, ec) || !fs::is_empty(dir, ec)) {
      throw Error(ErrorCode::DirectoryNotEmpty, dir.string());
    }
  }
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  ProjectManifest m;
  auto name = fs::absolute(dir).lexically_normal().filename().string();
  if (name.empty()) name = fs::absolute(dir).lexically_normal().parent_path().filename().string();
  if (!name.empty()) m.name = name;
  std::ofstream(dir / kManifestFile) << dump_manifest(m);
  std::ofstream(dir / "README.md") << readme_stub(m);
  out << "created " << (dir / kManifestFile).string() << '\n';
}

// ---- serve -----------------------------------------------------------------

struct ServeOptions {
  std::optional<fs::path> config;
  std::optional<fs::path> data_dir;
  std::string bind_address = "0.0.0.0";
  std::uint16_t port = 9000;
  std::uint16_t ws_port = 9001;
  fs::path console_dir = "console/dist";
};

// Level 1 asks for a drain, level 2 for an abort.
class StopSignal {
 public:
  void raise() {
    {
      std::lock_guard lock(mu_);
      ++level_;
    }
    cv_.notify_all();
  }

  int wait_for_level(int level) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return level_ >= level; });
    return level_;
  }

  int level() const {
    std::lock_guard lock(mu_);
    return level_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int level_ = 0;
};

// Serves until `stop` is raised, then drains running trials; a second raise
// aborts them. `on_ready` receives the bound ports.
inline void cmd_serve(const ServeOptions& opts, std::ostream& out, StopSignal& stop,
                      const std::function<void(std::uint16_t, std::uint16_t)>& on_ready = {}) {
  auto [manifest, project_dir] = resolve_manifest(opts.config);
  std::mutex out_mu;
  auto say = [&](const std::string& line) {
    std::lock_guard lock(out_mu);
    out << line << std::endl;
  };

  OrchestratorOptions o;
  o.data_dir = resolve_data_dir(opts.data_dir, project_dir);
  o.default_config = manifest.trial;
  o.create_on_join = true;
  o.on_event = say;

  net::IoThread io;
  Orchestrator orch(o);
  net::ServerOptions so{opts.bind_address, opts.port, opts.ws_port, opts.console_dir};
  net::Server server(io.context(), so, [&](std::shared_ptr<net::Connection> c) { orch.attach(std::move(c)); });
  say("listening tcp=" + std::to_string(server.tcp_port()) + " ws=" + std::to_string(server.ws_port()) +
      " data_dir=" + o.data_dir.string());
  if (on_ready) on_ready(server.tcp_port(), server.ws_port());

  stop.wait_for_level(1);
  say("draining");
  server.stop();
  std::thread aborter([&] {
    if (stop.wait_for_level(2) >= 2) orch.abort_all();
  });
  orch.shutdown(/*abort_running=*/false);
  if (stop.level() < 2) stop.raise();  // releases the aborter
  aborter.join();
  io.stop();
  say("stopped");
}

// ---- train -----------------------------------------------------------------

struct TrainOptions {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::size_t episodes = 200;
  std::optional<fs::path> offline;
  std::string host = "127.0.0.1";
  std::optional<std::uint16_t> port;  // remote orchestrator when set
  std::optional<fs::path> data_dir;
  std::optional<fs::path> out_dir;
};

struct TrainReport {
  fs::path curve;
  fs::path checkpoints;
  std::vector<algo::EpisodeStats> stats;
};

namespace detail {

inline std::vector<std::unique_ptr<ActorClient>> learner_clients(
    std::size_t n, const std::function<std::shared_ptr<net::Connection>(std::size_t)>& connect) {
  std::vector<std::unique_ptr<ActorClient>> clients;
  for (std::size_t i = 0; i < n; ++i) {
    clients.push_back(std::make_unique<ActorClient>(connect(i), ActorClass::Agent, "learner-" + std::to_string(i)));
  }
  return clients;
}

}  // namespace detail

inline TrainReport cmd_train(const TrainOptions& opts, std::ostream& out) {
  auto [manifest, project_dir] = resolve_manifest(opts.config);
  const bool seeded = opts.seed.has_value();
  const std::uint64_t seed = seeded ? *opts.seed : std::random_device{}();
  algo::TrainConfig tc{manifest.algorithm, manifest.hyperparameters, opts.episodes, seed};

  TrainReport report;
  const fs::path out_dir = opts.out_dir.value_or(
      project_dir / "runs" / (std::string(algo::to_string(manifest.algorithm)) + "-seed" + std::to_string(seed)));
  fs::create_directories(out_dir);
  report.curve = out_dir / "curve.csv";
  report.checkpoints = out_dir / "checkpoints";
  std::ofstream curve(report.curve, std::ios::trunc);
  if (!curve) throw Error(ErrorCode::Io, "cannot write " + report.curve.string());

  std::unique_ptr<algo::Learner> learner;
  if (opts.offline) {
    auto data = store::load_dataset(*opts.offline);
    if (!data.schema.contains("n_actors")) {
      if (opts.episodes > 0) throw Error(ErrorCode::BadDataset, "dataset has no trials");
      curve << algo::kCurveHeader << '\n';
      return report;
    }
    algo::JointLayout layout;
    env::EnvironmentSpec spec;
    std::uint64_t env_seed = 0;
    try {
      layout = {data.schema.at("n_actors").get<std::size_t>(), data.schema.at("obs_dim").get<std::size_t>(),
                data.schema.at("n_actions").get<std::size_t>()};
      spec = data.schema.at("env_spec").get<env::EnvironmentSpec>();
      env_seed = data.schema.at("seed").get<std::uint64_t>();
    } catch (const std::exception& e) {
      throw Error(ErrorCode::BadDataset, std::string("schema: ") + e.what());
    }
    learner = algo::make_learner(manifest.algorithm, layout, manifest.hyperparameters, seed);
    algo::DirectInteraction evaluation(spec, layout.n_agents, env_seed);
    report.stats = algo::train_offline(tc, data.transitions, *learner, &evaluation, &curve);
  } else {
    TrialConfig cfg = manifest.trial;
    if (cfg.include_human) {
      throw Error(ErrorCode::InvalidConfig, "training runs without a human seat; set trial.include_human to false");
    }
    const std::size_t n = cfg.actor_count();
    algo::JointLayout layout{n, env::observation_size(cfg.env_spec, n), env::kNumActions};
    learner = algo::make_learner(manifest.algorithm, layout, manifest.hyperparameters, seed);

    if (opts.port) {
      net::IoThread io;
      auto clients = detail::learner_clients(
          n, [&](std::size_t) -> std::shared_ptr<net::Connection> { return net::connect_tcp(io.context(), opts.host, *opts.port); });
      OrchestratedInteraction interaction(std::move(clients), nullptr, layout);
      report.stats = algo::train_loop(tc, interaction, *learner, &curve);
    } else {
      OrchestratorOptions o;
      o.data_dir = resolve_data_dir(opts.data_dir, project_dir);
      o.default_config = cfg;
      o.create_on_join = false;
      o.id_prefix = "train";
      if (seeded) o.clock = [] { return std::string(kFixedTimestamp); };
      Orchestrator orch(o);
      auto clients = detail::learner_clients(n, [&](std::size_t i) {
        auto [near, far] = net::make_pipe("learner-" + std::to_string(i));
        orch.attach(far);
        return near;
      });
      OrchestratedInteraction interaction(std::move(clients), [&] { return orch.start_trial(cfg); }, layout);
      report.stats = algo::train_loop(tc, interaction, *learner, &curve);
    }
  }
  fs::create_directories(report.checkpoints);
  learner->save(report.checkpoints);
  out << "trained " << report.stats.size() << " episodes; curve " << report.curve.string() << "; checkpoints "
      << report.checkpoints.string() << '\n';
  return report;
}

// ---- export ----------------------------------------------------------------

struct ExportOptions {
  std::vector<std::string> trial_ids;
  bool all = false;
  std::optional<fs::path> config;
  std::optional<fs::path> data_dir;
  fs::path out = "dataset.jsonl";
};

inline std::size_t cmd_export(const ExportOptions& opts, std::ostream& out) {
  fs::path project_dir = ".";
  if (opts.config) {
    project_dir = opts.config->parent_path().empty() ? fs::path(".") : opts.config->parent_path();
  }
  store::Datastore ds(resolve_data_dir(opts.data_dir, project_dir));
  std::vector<std::string> ids = opts.trial_ids;
  if (opts.all) {
    for (const auto& id : ds.list_trials()) {
      if (ds.load(id).ended()) ids.push_back(id);
    }
  }
  if (ids.empty()) throw Error(ErrorCode::UnknownTrial, "no trials given");
  const auto n = ds.export_dataset(ids, opts.out);
  out << n << " records\n";
  return n;
}

}  // namespace trialmesh::cli
