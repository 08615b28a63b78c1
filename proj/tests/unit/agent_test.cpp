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

#include <atomic>
#include <chrono>
#include <deque>
#include <thread>

#include "atys/agent.hpp"
#include "atys/error.hpp"
#include "atys/fsp.hpp"
#include "atys/net.hpp"
#include "doctest.h"
#include "httplib.h"
#include "oracles.hpp"

using namespace atys;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

// Returns queued windows in order; an empty queue yields empty windows.
class ScriptedKernel : public Kernel {
 public:
  ScriptedKernel(double hz, std::deque<FoldedProfile> windows, bool fail_when_drained = false)
      : Kernel(KernelKind::kReplay, hz, 1.0, {}), windows_(std::move(windows)), fail_(fail_when_drained) {}

 protected:
  FoldedProfile collect(std::uint64_t, double) override {
    if (windows_.empty()) {
      if (fail_) throw Error(ErrorCode::kKernelExited, "sampler exited with status 3");
      return {};
    }
    FoldedProfile p = std::move(windows_.front());
    windows_.pop_front();
    return p;
  }

 private:
  std::deque<FoldedProfile> windows_;
  bool fail_;
};

TaskSpec base_spec(double hz = 1000) {
  TaskSpec s;
  s.task_id = "t1";
  s.service = "svc";
  s.instance = "i-1";
  s.initial_frequency_hz = hz;
  s.kernel_kind = KernelKind::kReplay;
  return s;
}

FoldedProfile text_profile(std::string_view text) {
  return parse_folded(text, FoldedFormat{ThreadMode::kLeadingFrame, "all"});
}

json replay_config(const std::string& text, double window_seconds = 0.05) {
  return json{{"service", "svc"},
              {"instance", "i-1"},
              {"window_seconds", window_seconds},
              {"initial_frequency_hz", 1000},
              {"fsp_percentile", 100},
              {"fda", {{"enabled", false}}},
              {"kernel", {{"kind", "replay"}, {"text", text}}}};
}

std::string error_code(const json& reply) {
  if (reply.value("ok", true)) return "";
  return reply.at("error").at("code").get<std::string>();
}

template <typename Pred>
bool wait_for(Pred pred, std::chrono::milliseconds limit = 10s) {
  const auto deadline = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(10ms);
  }
  return pred();
}

}  // namespace

TEST_CASE("task state machine") {
  using S = TaskState;
  const S all[] = {S::kStarting, S::kRunning, S::kStopping, S::kStopped, S::kFailed};
  int legal = 0;
  for (S a : all) {
    for (S b : all) legal += is_legal_transition(a, b) ? 1 : 0;
  }
  CHECK(legal == 6);
  CHECK(is_legal_transition(S::kStarting, S::kRunning));
  CHECK(is_legal_transition(S::kRunning, S::kStopping));
  CHECK(is_legal_transition(S::kStopping, S::kStopped));
  CHECK(is_legal_transition(S::kRunning, S::kFailed));
  CHECK_FALSE(is_legal_transition(S::kStopped, S::kRunning));
  CHECK_FALSE(is_legal_transition(S::kFailed, S::kRunning));
  CHECK_FALSE(is_legal_transition(S::kRunning, S::kStopped));
  CHECK(task_state_name(S::kStopping) == "Stopping");

  TaskRunner runner(base_spec(), std::make_unique<ScriptedKernel>(1000, std::deque<FoldedProfile>{}));
  CHECK(runner.state() == S::kStarting);
  CHECK_FALSE(runner.transition(S::kStopped));
  CHECK(runner.transition(S::kRunning));
  CHECK(runner.transition(S::kFailed, "boom"));
  CHECK(runner.failure_reason() == "boom");
  CHECK_FALSE(runner.transition(S::kRunning));
}

TEST_CASE("cumulative cpu seconds follow the window frequency") {
  std::deque<FoldedProfile> windows;
  windows.push_back(text_profile("T1;main;hot 400\nT1;main;cold 600\n"));
  auto spec = base_spec(1000);
  spec.fda_enabled = false;
  TaskRunner runner(spec, std::make_unique<ScriptedKernel>(1000, std::move(windows)));
  const auto snap = runner.run_window();
  REQUIRE(snap->metrics.functions.size() == 2);
  CHECK(snap->metrics.functions[0].function == "cold");
  CHECK(snap->metrics.functions[1].function == "hot");
  CHECK(snap->metrics.functions[1].samples == 400);
  CHECK(snap->metrics.functions[1].cpu_seconds == doctest::Approx(0.4));
  CHECK(snap->metrics.functions[1].share == doctest::Approx(0.4));
  CHECK(snap->metrics.windows_completed == 1);
  CHECK_FALSE(snap->metrics.js_divergence.has_value());
}

TEST_CASE("local flamegraph total equals the sum of post-prune totals") {
  std::mt19937_64 rng(11);
  std::deque<FoldedProfile> windows;
  std::uint64_t expected = 0;
  Flamegraph expected_graph;
  for (int w = 0; w < 3; ++w) {
    auto p = FoldedProfile::from_records(testing::random_records(rng, 300, 40, 6, 12));
    const auto kept = prune(p, 99.0);
    expected += kept.profile.total_samples();
    expected_graph.merge_from(Flamegraph::build(kept.profile, false));
    windows.push_back(std::move(p));
  }
  TaskRunner runner(base_spec(), std::make_unique<ScriptedKernel>(1000, std::move(windows)));
  std::shared_ptr<const TaskSnapshot> snap;
  for (int w = 0; w < 3; ++w) snap = runner.run_window();
  const auto local = runner.local_flamegraph();
  CHECK(local.total == expected);
  CHECK(snap->post_prune_samples == expected);
  CHECK(local.folded == emit_folded(expected_graph));
  CHECK(local.window_index == 2);
  CHECK(snap->last_prune.has_value());
}

TEST_CASE("stable workload never raises the frequency") {
  std::deque<FoldedProfile> windows;
  for (int w = 0; w < 20; ++w) windows.push_back(text_profile("T1;a 50\nT1;b 30\nT1;c 20\nT2;a 10\n"));
  auto spec = base_spec(1000);
  TaskRunner runner(spec, std::make_unique<ScriptedKernel>(1000, std::move(windows)));
  std::vector<std::optional<double>> divergences;
  std::vector<double> observed;
  double prev = 1000;
  for (int w = 0; w < 20; ++w) {
    const auto snap = runner.run_window();
    CHECK(snap->metrics.frequency_hz <= prev);
    prev = snap->metrics.frequency_hz;
    observed.push_back(prev);
    divergences.push_back(w == 0 ? std::nullopt : std::optional<double>(0.0));
  }
  const auto oracle = testing::fda_oracle(divergences, 1000, 0.5, 0.8, 5, 10, 10000);
  CHECK(observed == oracle);
  CHECK(observed.back() < 1000);
}

TEST_CASE("empty window keeps the frequency and clears the divergence") {
  std::deque<FoldedProfile> windows;
  windows.push_back(text_profile("T1;a 10\n"));
  windows.push_back(text_profile("T1;b 10\n"));
  TaskRunner runner(base_spec(1000), std::make_unique<ScriptedKernel>(1000, std::move(windows)));
  runner.run_window();
  const auto second = runner.run_window();
  REQUIRE(second->metrics.js_divergence.has_value());
  CHECK(*second->metrics.js_divergence == doctest::Approx(1.0));
  const double f = second->metrics.frequency_hz;
  CHECK(f == doctest::Approx(1250));
  const auto empty = runner.run_window();
  CHECK(empty->metrics.frequency_hz == f);
  CHECK_FALSE(empty->metrics.js_divergence.has_value());
  CHECK(empty->metrics.windows_completed == 3);
  CHECK(empty->post_prune_samples == 20);
}

TEST_CASE("kernel failure moves the task to Failed") {
  std::deque<FoldedProfile> windows;
  windows.push_back(text_profile("T1;a 10\n"));
  TaskRunner runner(base_spec(), std::make_unique<ScriptedKernel>(1000, std::move(windows), true));
  runner.transition(TaskState::kRunning);
  runner.run_window();
  CHECK_THROWS_AS(runner.run_window(), Error);
  CHECK(runner.state() == TaskState::kFailed);
  CHECK(runner.failure_reason().find("KernelExited") != std::string::npos);
}

TEST_CASE("concurrent readers only see whole snapshots") {
  std::deque<FoldedProfile> windows;
  for (int w = 0; w < 300; ++w) windows.push_back(text_profile("T1;a 7\nT1;b 3\n"));
  auto spec = base_spec();
  spec.fda_enabled = false;
  TaskRunner runner(spec, std::make_unique<ScriptedKernel>(1000, std::move(windows)));
  std::atomic<bool> done{false};
  std::atomic<int> torn{0};
  std::atomic<int> reads{0};
  std::thread reader([&] {
    while (!done) {
      const auto snap = runner.snapshot();
      const auto& m = snap->metrics;
      if (m.windows_completed > 0) {
        if (m.functions.size() != 2 || m.functions[0].samples != 7 * m.windows_completed ||
            m.functions[1].samples != 3 * m.windows_completed || snap->post_prune_samples != 10 * m.windows_completed) {
          ++torn;
        }
      }
      ++reads;
    }
  });
  while (reads == 0) std::this_thread::yield();
  for (int w = 0; w < 300; ++w) {
    runner.run_window();
    std::this_thread::yield();
  }
  done = true;
  reader.join();
  CHECK(torn == 0);
  CHECK(reads > 0);
}

TEST_CASE("agent commands: validation and error codes") {
  Agent agent(AgentOptions{});
  CHECK(error_code(agent.handle_command(json::array())) == "BadRequest");
  CHECK(error_code(agent.handle_command(json{{"task_id", "x"}})) == "BadRequest");
  CHECK(error_code(agent.handle_command(json{{"type", "START"}})) == "BadRequest");
  CHECK(error_code(agent.handle_command(json{{"type", "RESTART"}, {"task_id", "x"}})) == "BadRequest");
  CHECK(error_code(json::parse(agent.handle_line("{not json"))) == "BadRequest");
  CHECK(error_code(agent.handle_command(json{{"type", "START"}, {"task_id", "x"}})) == "BadConfig");
  CHECK(error_code(agent.handle_command(json{{"type", "STOP"}, {"task_id", "nope"}})) == "UnknownTask");
  CHECK(error_code(agent.handle_command(json{{"type", "PULL_FLAMEGRAPH"}, {"task_id", "nope"}})) == "UnknownTask");
  CHECK(error_code(agent.handle_command(json{{"type", "STATUS"}, {"task_id", "nope"}})) == "UnknownTask");

  auto cfg = replay_config("T1;a 1\n");
  cfg["fda"] = {{"theta", 1.5}};
  const auto bad = agent.handle_command(json{{"type", "START"}, {"task_id", "x"}, {"config", cfg}});
  CHECK(error_code(bad) == "BadConfig");
  CHECK(bad["error"]["message"].get<std::string>().find("config.fda.theta") != std::string::npos);

  cfg = replay_config("T1;a 1\n");
  cfg["kernel"] = {{"kind", "replay"}, {"path", "/nonexistent/replay.folded"}};
  CHECK(error_code(agent.handle_command(json{{"type", "START"}, {"task_id", "x"}, {"config", cfg}})) == "BadConfig");

  const auto status = agent.handle_command(json{{"type", "STATUS"}});
  CHECK(status["ok"] == true);
  CHECK(status["tasks"].empty());
}

TEST_CASE("agent commands: token is required when configured") {
  AgentOptions opts;
  opts.token = "s3cret";
  Agent agent(opts);
  CHECK(error_code(agent.handle_command(json{{"type", "STATUS"}})) == "Unauthorized");
  CHECK(error_code(agent.handle_command(json{{"type", "STATUS"}, {"token", "wrong"}})) == "Unauthorized");
  CHECK(agent.handle_command(json{{"type", "STATUS"}, {"token", "s3cret"}})["ok"] == true);
}

TEST_CASE("agent lifecycle: replay at full coverage reproduces the input") {
  const std::string text =
      "T1;main;parse;tokenize 120\nT1;main;parse 30\nT2;main;render 200\nT3;worker;io 50\nT2;main;parse;tokenize 100\n";
  Agent agent(AgentOptions{});
  const auto started =
      agent.handle_command(json{{"type", "START"}, {"task_id", "r1"}, {"config", replay_config(text)}});
  REQUIRE(started["ok"] == true);
  CHECK(started["state"] == "Running");
  CHECK(error_code(agent.handle_command(json{{"type", "START"}, {"task_id", "r1"}, {"config", replay_config(text)}})) ==
        "DuplicateTaskId");

  REQUIRE(wait_for([&] {
    return agent.handle_command(json{{"type", "STATUS"}, {"task_id", "r1"}})["tasks"][0]["kernel_finished"] == true;
  }));
  const auto pulled = agent.handle_command(json{{"type", "PULL_FLAMEGRAPH"}, {"task_id", "r1"}});
  REQUIRE(pulled["ok"] == true);
  const Flamegraph expected = Flamegraph::build(text_profile(text), false);
  CHECK(pulled["folded"] == emit_folded(expected));
  CHECK(pulled["total"] == 500);
  CHECK(pulled["summary"]["post_prune_samples"] == 500);
  CHECK(pulled["summary"]["top"][0]["function"] == "tokenize");
  CHECK(pulled["summary"]["top"][0]["samples"] == 220);

  const auto stopped = agent.handle_command(json{{"type", "STOP"}, {"task_id", "r1"}});
  CHECK(stopped["ok"] == true);
  CHECK(stopped["state"] == "Stopped");
  CHECK(stopped["total"] == 500);
  CHECK(error_code(agent.handle_command(json{{"type", "STOP"}, {"task_id", "r1"}})) == "InvalidState");
  CHECK(agent.handle_command(json{{"type", "STATUS"}})["tasks"][0]["state"] == "Stopped");
}

TEST_CASE("agent over the network: command port, metrics and local files") {
  testing::TempDir dir;
  AgentOptions opts;
  opts.data_dir = dir.path();
  Agent agent(opts);
  agent.serve();
  REQUIRE(agent.command_port() != 0);
  REQUIRE(agent.metrics_port() != 0);

  httplib::Client client("127.0.0.1", agent.metrics_port());
  auto res = client.Get("/metrics");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(testing::parse_exposition(res->body).at("atys_function_share").samples.empty());

  const json start{{"type", "START"}, {"task_id", "n1"}, {"config", replay_config("T1;a 30\nT1;b 10\n")}};
  const auto reply = json::parse(line_request("127.0.0.1", agent.command_port(), start.dump(), 5s));
  REQUIRE(reply["ok"] == true);
  REQUIRE(wait_for([&] { return agent.handle_command(json{{"type", "STATUS"}})["tasks"][0]["kernel_finished"] == true; }));

  res = client.Get("/metrics");
  REQUIRE(res);
  const auto parsed = testing::parse_exposition(res->body);
  const auto& samples = parsed.at("atys_function_samples_total").samples;
  REQUIRE(samples.size() == 2);
  std::map<std::string, double> by_fn;
  for (const auto& s : samples) by_fn[s.labels.at("function")] = s.value;
  CHECK(by_fn["a"] == 30);
  CHECK(by_fn["b"] == 10);
  CHECK(parsed.at("atys_sampling_frequency_hz").samples.at(0).value == 1000);

  bool found = false;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    const auto name = e.path().filename().string();
    if (name.rfind("svc_", 0) == 0 && name.size() > 13 && name.substr(name.size() - 13) == "_local.folded") {
      found = true;
    }
  }
  CHECK(found);
  agent.shutdown();
  CHECK_THROWS_AS(line_request("127.0.0.1", agent.command_port(), "{}", 1s), Error);
}
