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

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "atys/exposition.hpp"
#include "atys/fda.hpp"
#include "atys/flamegraph.hpp"
#include "atys/fsp.hpp"
#include "atys/kernel.hpp"
#include "atys/task_codec.hpp"
#include "json.hpp"

namespace atys {

enum class TaskState { kStarting, kRunning, kStopping, kStopped, kFailed };

std::string_view task_state_name(TaskState state);

// Starting -> Running -> Stopping -> Stopped, and any live state -> Failed.
bool is_legal_transition(TaskState from, TaskState to) noexcept;

// Everything published at the end of one window.
struct TaskSnapshot {
  TaskMetrics metrics;
  std::optional<PruneReport> last_prune;
  std::uint64_t last_window_index = 0;
  std::uint64_t post_prune_samples = 0;  // cumulative
};

struct LocalFlamegraph {
  std::string folded;
  std::uint64_t total = 0;
  std::uint64_t window_index = 0;
};

// One task's window pipeline. run_window() must only be called by a single
// owner at a time; every other accessor is safe from any thread.
class TaskRunner {
 public:
  TaskRunner(TaskSpec spec, std::unique_ptr<Kernel> kernel);
  ~TaskRunner();

  // Builds the kernel from the spec. Throws BadConfig.
  static std::unique_ptr<TaskRunner> create(TaskSpec spec);

  const TaskSpec& spec() const noexcept { return spec_; }

  // Poll, prune, summarize, adapt the frequency, publish. Kernel failures
  // move the task to Failed and are rethrown.
  std::shared_ptr<const TaskSnapshot> run_window();

  std::shared_ptr<const TaskSnapshot> snapshot() const;
  LocalFlamegraph local_flamegraph() const;
  bool kernel_finished() const noexcept { return kernel_finished_.load(); }
  void stop_kernel();

  TaskState state() const;
  std::string failure_reason() const;
  // Returns false (and changes nothing) for illegal transitions.
  bool transition(TaskState to, const std::string& reason = {});

  // When set, every window writes <service>_<window>_local.{folded,json}.
  void set_data_dir(std::filesystem::path dir) { data_dir_ = std::move(dir); }

 private:
  struct Cumulative {
    std::uint64_t samples = 0;
    double cpu_seconds = 0.0;
  };

  void publish(std::shared_ptr<const TaskSnapshot> snap);
  void write_local_files(std::uint64_t window_index);

  TaskSpec spec_;
  std::unique_ptr<Kernel> kernel_;
  FrequencyState fda_state_;
  std::map<std::string, Cumulative, std::less<>> cumulative_;
  std::map<std::string, double, std::less<>> latest_share_;
  std::filesystem::path data_dir_;
  std::atomic<bool> kernel_finished_{false};

  mutable std::mutex snap_mu_;
  std::shared_ptr<const TaskSnapshot> snapshot_;

  mutable std::mutex graph_mu_;
  Flamegraph local_;
  std::uint64_t local_window_index_ = 0;

  mutable std::mutex state_mu_;
  TaskState state_ = TaskState::kStarting;
  std::string failure_reason_;
};

struct AgentOptions {
  std::string bind_address = "127.0.0.1";
  std::uint16_t command_port = 0;  // 0: ephemeral
  std::uint16_t metrics_port = 0;
  std::string token;               // empty: no authentication
  std::filesystem::path data_dir;  // empty: no flamegraph files
};

class LineServer;
struct MetricsServer;

class Agent {
 public:
  explicit Agent(AgentOptions options);
  ~Agent();

  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  // Binds the command and metrics ports. Throws ConnectionFailed.
  void serve();
  // Stops the servers and every live task.
  void shutdown();

  std::uint16_t command_port() const noexcept { return command_port_; }
  std::uint16_t metrics_port() const noexcept { return metrics_port_; }

  nlohmann::json handle_command(const nlohmann::json& message);
  std::string handle_line(std::string_view line);
  std::string exposition() const;

 private:
  struct Task {
    std::shared_ptr<TaskRunner> runner;
    std::thread loop;
    std::mutex mu;
    std::condition_variable cv;
    bool stop_requested = false;
    std::mutex join_mu;
  };

  nlohmann::json start(const nlohmann::json& message);
  nlohmann::json stop(const std::string& task_id);
  nlohmann::json status(const nlohmann::json& message);
  nlohmann::json pull(const std::string& task_id);
  std::shared_ptr<Task> find(const std::string& task_id) const;
  void window_loop(Task& task);
  static void end_loop(Task& task);

  AgentOptions options_;
  mutable std::mutex tasks_mu_;
  std::map<std::string, std::shared_ptr<Task>> tasks_;
  std::unique_ptr<LineServer> command_server_;
  std::unique_ptr<MetricsServer> metrics_server_;
  std::uint16_t command_port_ = 0;
  std::uint16_t metrics_port_ = 0;
};

nlohmann::json error_response(std::string_view code, const std::string& message);

}  // namespace atys
