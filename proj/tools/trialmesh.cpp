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

#include <csignal>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "trialmesh/cli.hpp"

namespace {

// Single-line, machine-parseable failure report.
int fail(const std::string& code, std::string message) {
  for (auto& c : message) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: " << code << ": " << message << std::endl;
  return code == "Usage" ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = trialmesh::cli;
  CLI::App app{"trialmesh: multi-agent trials with humans in the loop"};
  app.require_subcommand(1);

  std::string init_dir;
  auto* init = app.add_subcommand("init", "Create a project directory with trialmesh.json");
  init->add_option("name", init_dir, "Directory to create (absent or empty)")->required();

  cli::ServeOptions serve_opts;
  std::string serve_config, serve_data;
  auto* serve = app.add_subcommand("serve", "Run the orchestrator (TCP and WebSocket)");
  serve->add_option("--config", serve_config, "Project manifest");
  serve->add_option("--port", serve_opts.port, "TCP port")->capture_default_str();
  serve->add_option("--ws-port", serve_opts.ws_port, "WebSocket port")->capture_default_str();
  serve->add_option("--bind", serve_opts.bind_address, "Bind address")->capture_default_str();
  serve->add_option("--data-dir", serve_data, "Datastore root (overrides TRIALMESH_DATA_DIR)");
  serve->add_option("--console-dir", serve_opts.console_dir, "Static files served under /console")
      ->capture_default_str();

  cli::TrainOptions train_opts;
  std::string train_config, train_data, train_offline, train_out;
  std::uint64_t train_seed = 0;
  std::uint16_t train_port = 0;
  auto* train = app.add_subcommand("train", "Train learners and write a learning curve and checkpoints");
  train->add_option("--config", train_config, "Project manifest");
  auto* seed_opt = train->add_option("--seed", train_seed, "Seed; makes the run bit-deterministic");
  train->add_option("--episodes", train_opts.episodes, "Episodes (epochs when offline)")->capture_default_str();
  train->add_option("--offline", train_offline, "Train from an exported dataset instead of live trials");
  auto* port_opt = train->add_option("--port", train_port, "Use a running orchestrator on this TCP port");
  train->add_option("--host", train_opts.host, "Orchestrator host for --port")->capture_default_str();
  train->add_option("--data-dir", train_data, "Datastore root for in-process trials");
  train->add_option("--out", train_out, "Output directory (default runs/<algorithm>-seed<seed>)");

  cli::ExportOptions export_opts;
  std::string export_config, export_data;
  auto* exp = app.add_subcommand("export", "Flatten ended trials into a dataset file");
  exp->add_option("trial_ids", export_opts.trial_ids, "Trial ids");
  exp->add_flag("--all", export_opts.all, "Export every ended trial");
  exp->add_option("--config", export_config, "Project manifest");
  exp->add_option("--data-dir", export_data, "Datastore root (overrides TRIALMESH_DATA_DIR)");
  exp->add_option("--out", export_opts.out, "Dataset path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("Usage", e.what());
  }

  auto opt_path = [](const std::string& s) -> std::optional<std::filesystem::path> {
    if (s.empty()) return std::nullopt;
    return std::filesystem::path(s);
  };

  try {
    if (*init) {
      cli::cmd_init(init_dir, std::cout);
    } else if (*serve) {
      serve_opts.config = opt_path(serve_config);
      serve_opts.data_dir = opt_path(serve_data);
      // Signals are taken synchronously by one thread; every other thread
      // inherits the blocked mask.
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      cli::StopSignal stop;
      std::thread watcher([&] {
        for (int i = 0; i < 2; ++i) {
          int sig = 0;
          if (sigwait(&set, &sig) != 0 || sig == 0) return;
          stop.raise();
        }
      });
      watcher.detach();
      cli::cmd_serve(serve_opts, std::cout, stop);
    } else if (*train) {
      train_opts.config = opt_path(train_config);
      train_opts.data_dir = opt_path(train_data);
      train_opts.offline = opt_path(train_offline);
      train_opts.out_dir = opt_path(train_out);
      if (seed_opt->count()) train_opts.seed = train_seed;
      if (port_opt->count()) train_opts.port = train_port;
      cli::cmd_train(train_opts, std::cout);
    } else if (*exp) {
      export_opts.config = opt_path(export_config);
      export_opts.data_dir = opt_path(export_data);
      cli::cmd_export(export_opts, std::cout);
    }
  } catch (const trialmesh::Error& e) {
    std::string what = e.what();
    const std::string prefix = std::string(to_string(e.code())) + ": ";
    if (what.rfind(prefix, 0) == 0) what = what.substr(prefix.size());
    return fail(std::string(to_string(e.code())), what);
  } catch (const std::exception& e) {
    return fail("Internal", e.what());
  }
  return 0;
}
