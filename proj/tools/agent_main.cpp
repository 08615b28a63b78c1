// Copyright 2026 The Atys Authors.
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

// Node agent: command port, metrics endpoint and per-task window loops.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "atys/agent.hpp"
#include "atys/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"atys agent"};
  atys::AgentOptions options;
  std::string data_dir;
  app.add_option("--bind", options.bind_address, "Listen address")->capture_default_str();
  app.add_option("--command-port", options.command_port, "Command port (0: ephemeral)")->capture_default_str();
  app.add_option("--metrics-port", options.metrics_port, "Metrics port (0: ephemeral)")->capture_default_str();
  app.add_option("--token", options.token, "Shared token required on every command")
      ->envname("ATYS_TOKEN");
  app.add_option("--data-dir", data_dir, "Directory for local flamegraph files");
  CLI11_PARSE(app, argc, argv);
  options.data_dir = data_dir;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  atys::Agent agent(options);
  try {
    agent.serve();
  } catch (const atys::Error& e) {
    std::cerr << "atys-agent: " << e.what() << "\n";
    return 1;
  }
  std::cout << "command_port=" << agent.command_port() << " metrics_port=" << agent.metrics_port() << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  agent.shutdown();
  return 0;
}
