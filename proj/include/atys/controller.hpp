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

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atys/calibration.hpp"
#include "atys/fda.hpp"
#include "atys/flamegraph.hpp"
#include "json.hpp"

namespace atys {

struct TargetConfig {
  std::string host = "127.0.0.1";
  std::uint16_t command_port = 0;
  std::string instance_id;
  // Forwarded verbatim to the agent; at least one of process/kernel is set.
  nlohmann::json process;
  nlohmann::json kernel;
  nlohmann::json exec_templates;
};

struct SamplingConfig {
  double initial_frequency_hz = 100.0;
  double window_seconds = 10.0;
  FdaConfig fda;
  bool fda_enabled = true;
  double fsp_percentile = 99.0;
  std::size_t top_k = 10;
};

struct AggregationConfig {
  std::uint32_t pull_every_n_windows = 1;
  std::size_t group_size = 0;  // 0: flat merge
};

struct TaskConfig {
  std::string service;
  std::string task_id;  // generated by start_task when empty
  std::string token;
  std::vector<TargetConfig> targets;
  SamplingConfig sampling;
  AggregationConfig aggregation;
};

// Validates and fills defaults. Throws ConfigError with the field path,
// e.g. "targets[1].instance_id".
TaskConfig parse_task_config(const nlohmann::json& j);
TaskConfig load_config(const std::filesystem::path& path);
nlohmann::json task_config_to_json(const TaskConfig& config);

// The START "config" object sent to one target.
nlohmann::json agent_task_config(const TaskConfig& config, const TargetConfig& target);

struct InstanceOutcome {
  std::string instance_id;
  bool ok = false;
  std::string state;
  std::string error_code;
  std::string error_message;
  nlohmann::json response;
};

struct FanoutSummary {
  std::string task_id;
  std::string operation;
  std::vector<InstanceOutcome> instances;

  std::size_t succeeded() const noexcept;
  bool all_failed() const noexcept { return succeeded() == 0; }
  nlohmann::json to_json() const;
};

// Merges pulled local flamegraphs one at a time, optionally in hierarchical
// groups; memory holds one partial tree per hierarchy level.
class GlobalAggregator {
 public:
  explicit GlobalAggregator(std::size_t group_size = 0);

  // Parses the folded text and merges it; returns the local total.
  std::uint64_t add_local(std::string_view folded);
  void add_local(const Flamegraph& local);

  std::size_t locals() const noexcept { return stream_.added(); }
  std::uint64_t sum_local_totals() const noexcept { return sum_totals_; }

  // Throws NoData when nothing was added.
  Flamegraph finish();
  const HierarchyStats& stats() const noexcept { return stream_.stats(); }

 private:
  StreamingAggregator stream_;
  std::uint64_t sum_totals_ = 0;
};

struct InstanceSummary {
  std::string instance_id;
  std::uint64_t total = 0;
  std::uint64_t window_index = 0;
  nlohmann::json summary;  // top-k table, frequency, prune report
};

struct GlobalReport {
  std::string task_id;
  std::string service;
  std::uint64_t window_index = 0;
  std::uint64_t global_total = 0;
  std::uint64_t sum_local_totals = 0;
  std::size_t group_size = 0;
  HierarchyStats hierarchy;
  std::vector<InstanceSummary> instances;
  std::vector<InstanceOutcome> failed;
  double pull_seconds = 0.0;
  double merge_seconds = 0.0;
  std::filesystem::path folded_path;
  std::filesystem::path json_path;
  std::filesystem::path report_path;

  nlohmann::json to_json() const;
};

struct AggregateOptions {
  std::filesystem::path out_dir = ".";
  std::optional<std::size_t> group_size;  // overrides the task config
};

struct ControllerOptions {
  std::filesystem::path state_dir = ".atys";
  std::size_t max_in_flight = 64;
  std::chrono::milliseconds timeout{30000};
};

class Controller {
 public:
  explicit Controller(ControllerOptions options = {});

  // Registers the task, then fans START out to every target. Throws
  // DuplicateTaskId when the id is already registered.
  FanoutSummary start_task(TaskConfig config);
  // Throw UnknownTask for ids missing from the registry.
  FanoutSummary stop_task(const std::string& task_id);
  FanoutSummary status(const std::string& task_id);
  // Throws NoData when no instance returns a flamegraph.
  GlobalReport aggregate_global(const std::string& task_id, const AggregateOptions& options);

  TaskConfig load_task(const std::string& task_id) const;
  const ControllerOptions& options() const noexcept { return options_; }

 private:
  std::vector<InstanceOutcome> fan_out(const TaskConfig& config, const std::vector<std::size_t>& targets,
                                       const std::function<nlohmann::json(const TargetConfig&)>& message);
  std::filesystem::path registry_path(const std::string& task_id) const;

  ControllerOptions options_;
};

// Runs fn(i) for i in [0, n) on at most max_in_flight threads.
void bounded_parallel_for(std::size_t n, std::size_t max_in_flight, const std::function<void(std::size_t)>& fn);

// CSV rows "p,time_seconds,mape_percent"; an optional header row and blank
// lines are skipped. Throws InvalidArgument naming file and row.
std::vector<CalibrationSample> read_calibration_csv(const std::filesystem::path& path);

struct CalibrationReport {
  LinearModel time_model;
  LogModel mape_model;
  double epsilon = 0.0;
  double p_star = 0.0;
  std::size_t rows = 0;

  nlohmann::json to_json() const;
};

// Needs at least three rows (DegenerateInput). Errors carry the file name;
// an unreachable epsilon raises InfeasibleTarget.
CalibrationReport calibrate(const std::filesystem::path& csv_path, double epsilon);
CalibrationReport calibrate(std::span<const CalibrationSample> samples, double epsilon);

}  // namespace atys
