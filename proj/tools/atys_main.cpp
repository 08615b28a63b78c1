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

// Controller command line: start, stop, status, aggregate, calibrate.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "atys/controller.hpp"
#include "atys/error.hpp"
#include "json.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;

using nlohmann::json;

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

int fail(const atys::Error& e, int code) {
  json j{{"ok", false}, {"error", {{"code", std::string(atys::error_code_name(e.code()))}, {"message", e.what()}}}};
  if (const auto* ce = dynamic_cast<const atys::ConfigError*>(&e)) j["error"]["field"] = ce->field_path();
  if (const auto* inf = dynamic_cast<const atys::InfeasibleTarget*>(&e)) j["error"]["mape_at_100"] = inf->mape_at_max();
  print(j);
  return code;
}

int fanout_exit(const atys::FanoutSummary& s) {
  json j = s.to_json();
  j["ok"] = !s.all_failed();
  print(j);
  return s.all_failed() ? kExitFailed : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"atys controller"};
  app.require_subcommand(1);

  atys::ControllerOptions options;
  std::string state_dir = ".atys";
  long timeout_ms = 30000;
  std::size_t max_in_flight = 64;
  app.add_option("--state-dir", state_dir, "Directory holding the task registry")->capture_default_str();
  app.add_option("--timeout-ms", timeout_ms, "Per-request agent timeout")->capture_default_str()->check(
      CLI::PositiveNumber);
  app.add_option("--max-in-flight", max_in_flight, "Concurrent agent connections")->capture_default_str()->check(
      CLI::PositiveNumber);

  std::string config_path;
  auto* start = app.add_subcommand("start", "Start a profiling task on every target");
  start->add_option("--config", config_path, "Task configuration (JSON)")->required();

  std::string task_id;
  auto* stop = app.add_subcommand("stop", "Stop a task and flush final windows");
  stop->add_option("--task", task_id, "Task id")->required();
  auto* status = app.add_subcommand("status", "Report per-instance task states");
  status->add_option("--task", task_id, "Task id")->required();

  std::size_t group_size = 0;
  std::string out_dir;
  auto* aggregate = app.add_subcommand("aggregate", "Merge local flamegraphs into a global one");
  aggregate->add_option("--task", task_id, "Task id")->required();
  auto* group_opt = aggregate->add_option("--group-size", group_size, "Hierarchical group size (0: flat)");
  aggregate->add_option("--out", out_dir, "Output directory")->required();

  std::string samples_path;
  double epsilon = 0.0;
  auto* calibrate = app.add_subcommand("calibrate", "Fit cost/accuracy curves and recommend a percentile");
  calibrate->add_option("--samples", samples_path, "CSV of p,time_seconds,mape_percent")->required();
  calibrate->add_option("--epsilon", epsilon, "Accepted MAPE in percent")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  options.state_dir = state_dir;
  options.timeout = std::chrono::milliseconds(timeout_ms);
  options.max_in_flight = max_in_flight;
  atys::Controller controller(options);

  try {
    if (*start) {
      atys::TaskConfig config;
      try {
        config = atys::load_config(config_path);
      } catch (const atys::Error& e) {
        return fail(e, kExitConfig);
      }
      return fanout_exit(controller.start_task(std::move(config)));
    }
    if (*stop) return fanout_exit(controller.stop_task(task_id));
    if (*status) return fanout_exit(controller.status(task_id));
    if (*aggregate) {
      atys::AggregateOptions agg;
      agg.out_dir = out_dir;
      if (group_opt->count() > 0) agg.group_size = group_size;
      const atys::GlobalReport report = controller.aggregate_global(task_id, agg);
      json j = report.to_json();
      j["ok"] = true;
      print(j);
      return kExitOk;
    }
    if (*calibrate) {
      atys::CalibrationReport report;
      try {
        report = atys::calibrate(std::filesystem::path(samples_path), epsilon);
      } catch (const atys::Error& e) {
        const bool bad_input = e.code() == atys::ErrorCode::kIo || e.code() == atys::ErrorCode::kInvalidArgument ||
                               e.code() == atys::ErrorCode::kDegenerateInput;
        return fail(e, bad_input ? kExitConfig : kExitFailed);
      }
      json j = report.to_json();
      j["ok"] = true;
      print(j);
      return kExitOk;
    }
  } catch (const atys::ConfigError& e) {
    return fail(e, kExitConfig);
  } catch (const atys::Error& e) {
    return fail(e, kExitFailed);
  } catch (const std::exception& e) {
    print(json{{"ok", false}, {"error", {{"code", "Internal"}, {"message", e.what()}}}});
    return kExitFailed;
  }
  return kExitFailed;
}
