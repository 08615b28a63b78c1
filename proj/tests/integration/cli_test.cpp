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

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <thread>

#include "atys/agent.hpp"
#include "atys/error.hpp"
#include "atys/net.hpp"
#include "doctest.h"
#include "oracles.hpp"

extern char** environ;

using namespace atys;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  json body;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') {
      q += "'\\''";
    } else {
      q += c;
    }
  }
  return q + "'";
}

RunResult run_cli(const testing::TempDir& dir, const std::string& args) {
  const std::string cmd = quote(ATYS_CLI) + " --state-dir " + quote((dir / "state").string()) +
                          " --timeout-ms 3000 " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  try {
    r.body = json::parse(r.out);
  } catch (const json::parse_error&) {
    r.body = nullptr;
  }
  return r;
}

json target(std::uint16_t port, const std::string& id, const std::string& text) {
  return json{{"host", "127.0.0.1"},
              {"command_port", port},
              {"instance_id", id},
              {"kernel", {{"kind", "replay"}, {"text", text}}}};
}

json config_with(std::vector<json> targets, const std::string& task_id) {
  return json{{"service", "cli"},
              {"task_id", task_id},
              {"targets", targets},
              {"sampling",
               {{"window_seconds", 0.05},
                {"initial_frequency_hz", 1000},
                {"fsp_percentile", 100},
                {"fda", {{"enabled", false}}}}}};
}

std::uint16_t closed_port() {
  Agent probe(AgentOptions{});
  probe.serve();
  const auto port = probe.command_port();
  probe.shutdown();
  return port;
}

}  // namespace

TEST_CASE("cli: start, status, aggregate and stop against live agents") {
  testing::TempDir dir;
  Agent a1(AgentOptions{});
  a1.serve();
  const std::string text = "T1;main;work 30\nT2;main;idle 10\n";
  testing::write_text(dir / "task.json",
                      config_with({target(a1.command_port(), "n1", text), target(closed_port(), "n2", text)}, "job1")
                          .dump());

  auto r = run_cli(dir, "start --config " + quote((dir / "task.json").string()));
  CHECK(r.exit_code == 0);
  REQUIRE(r.body.is_object());
  CHECK(r.body["succeeded"] == 1);
  CHECK(r.body["failed"] == 1);
  CHECK(r.body["task_id"] == "job1");

  r = run_cli(dir, "status --task job1");
  CHECK(r.exit_code == 0);
  CHECK(r.body["instances"][0]["state"] == "Running");

  for (int i = 0; i < 500; ++i) {
    if (a1.handle_command(json{{"type", "STATUS"}})["tasks"][0]["kernel_finished"] == true) break;
    std::this_thread::sleep_for(10ms);
  }
  r = run_cli(dir, "aggregate --task job1 --out " + quote((dir / "out").string()));
  CHECK(r.exit_code == 0);
  CHECK(r.body["global_total"] == 40);
  CHECK(testing::read_text(r.body["artifacts"]["folded"].get<std::string>()) == "main;idle 10\nmain;work 30\n");
  CHECK(std::filesystem::exists(r.body["artifacts"]["report"].get<std::string>()));

  r = run_cli(dir, "stop --task job1");
  CHECK(r.exit_code == 0);
  CHECK(r.body["instances"][0]["state"] == "Stopped");
}

TEST_CASE("cli: exit codes for failures and bad input") {
  testing::TempDir dir;
  testing::write_text(dir / "dead.json", config_with({target(closed_port(), "n1", "T;a 1\n")}, "dead").dump());
  auto r = run_cli(dir, "start --config " + quote((dir / "dead.json").string()));
  CHECK(r.exit_code == 1);
  CHECK(r.body["succeeded"] == 0);

  r = run_cli(dir, "aggregate --task dead --out " + quote((dir / "out").string()));
  CHECK(r.exit_code == 1);
  CHECK(r.body["error"]["code"] == "NoData");

  r = run_cli(dir, "stop --task never-started");
  CHECK(r.exit_code == 1);
  CHECK(r.body["error"]["code"] == "UnknownTask");

  testing::write_text(dir / "dup.json",
                      config_with({target(9000, "same", "T;a 1\n"), target(9001, "same", "T;a 1\n")}, "dup").dump());
  r = run_cli(dir, "start --config " + quote((dir / "dup.json").string()));
  CHECK(r.exit_code == 2);
  CHECK(r.body["error"]["field"] == "targets[1].instance_id");

  r = run_cli(dir, "start --config " + quote((dir / "missing.json").string()));
  CHECK(r.exit_code == 2);

  r = run_cli(dir, "start");
  CHECK(r.exit_code == 2);
  r = run_cli(dir, "frobnicate");
  CHECK(r.exit_code == 2);
}

TEST_CASE("cli: calibrate") {
  testing::TempDir dir;
  std::string csv = "p,time_seconds,mape_percent\n";
  for (double p : {0.0, 50.0, 80.0, 90.0, 95.0, 99.0}) {
    char row[128];
    std::snprintf(row, sizeof row, "%.17g,%.17g,%.17g\n", p, -1.0614 * p + 114.44,
                  984.368 * std::log(-0.001 * p + 1.099));
    csv += row;
  }
  testing::write_text(dir / "cal.csv", csv);
  auto r = run_cli(dir, "calibrate --samples " + quote((dir / "cal.csv").string()) + " --epsilon 15");
  CHECK(r.exit_code == 0);
  CHECK(std::abs(r.body["p_star"].get<double>() - 83.64510299771987) <= 1e-3);

  std::string high;
  for (double p : {0.0, 25.0, 50.0, 75.0, 100.0}) {
    char row[128];
    std::snprintf(row, sizeof row, "%.17g,%.17g,%.17g\n", p, 100.0 - p, 20.0 * std::log(-0.001 * p + 1.5));
    high += row;
  }
  testing::write_text(dir / "high.csv", high);
  r = run_cli(dir, "calibrate --samples " + quote((dir / "high.csv").string()) + " --epsilon 1");
  CHECK(r.exit_code == 1);
  CHECK(r.body["error"]["code"] == "Infeasible");
  CHECK(r.body["error"]["mape_at_100"].get<double>() == doctest::Approx(20.0 * std::log(1.4)).epsilon(1e-6));

  testing::write_text(dir / "two.csv", "10,1,5\n20,2,4\n");
  r = run_cli(dir, "calibrate --samples " + quote((dir / "two.csv").string()) + " --epsilon 15");
  CHECK(r.exit_code == 2);
  CHECK(r.body["error"]["code"] == "DegenerateInput");
}

TEST_CASE("agent binary: serves commands and exits on SIGTERM") {
  int fds[2];
  REQUIRE(pipe(fds) == 0);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, fds[0]);
  std::string bin = ATYS_AGENT_CLI;
  std::string token_flag = "--token=tok";
  char* argv[] = {bin.data(), token_flag.data(), nullptr};
  pid_t pid = 0;
  REQUIRE(posix_spawn(&pid, bin.c_str(), &actions, nullptr, argv, environ) == 0);
  posix_spawn_file_actions_destroy(&actions);
  close(fds[1]);

  std::string line;
  char c = 0;
  while (read(fds[0], &c, 1) == 1 && c != '\n') line += c;
  close(fds[0]);
  unsigned command_port = 0;
  unsigned metrics_port = 0;
  REQUIRE(std::sscanf(line.c_str(), "command_port=%u metrics_port=%u", &command_port, &metrics_port) == 2);

  const auto denied = json::parse(line_request("127.0.0.1", static_cast<std::uint16_t>(command_port),
                                               R"({"type":"STATUS"})", 3s));
  CHECK(denied["error"]["code"] == "Unauthorized");
  const auto ok = json::parse(line_request("127.0.0.1", static_cast<std::uint16_t>(command_port),
                                           R"({"type":"STATUS","token":"tok"})", 3s));
  CHECK(ok["ok"] == true);

  kill(pid, SIGTERM);
  int status = 0;
  REQUIRE(waitpid(pid, &status, 0) == pid);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
}
