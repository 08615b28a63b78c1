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

#include "atys/agent.hpp"

#include <algorithm>
#include <chrono>

#include "atys/error.hpp"
#include "atys/fileio.hpp"
#include "atys/net.hpp"
#include "httplib.h"

namespace atys {

using nlohmann::json;

std::string_view task_state_name(TaskState state) {
  switch (state) {
    case TaskState::kStarting: return "Starting";
    case TaskState::kRunning: return "Running";
    case TaskState::kStopping: return "Stopping";
    case TaskState::kStopped: return "Stopped";
    case TaskState::kFailed: return "Failed";
  }
  return "Unknown";
}

bool is_legal_transition(TaskState from, TaskState to) noexcept {
  switch (from) {
    case TaskState::kStarting: return to == TaskState::kRunning || to == TaskState::kFailed;
    case TaskState::kRunning: return to == TaskState::kStopping || to == TaskState::kFailed;
    case TaskState::kStopping: return to == TaskState::kStopped || to == TaskState::kFailed;
    case TaskState::kStopped:
    case TaskState::kFailed: return false;
  }
  return false;
}

json error_response(std::string_view code, const std::string& message) {
  return json{{"ok", false}, {"error", {{"code", std::string(code)}, {"message", message}}}};
}

// ---------------------------------------------------------------------------
// TaskRunner

TaskRunner::TaskRunner(TaskSpec spec, std::unique_ptr<Kernel> kernel)
    : spec_(std::move(spec)), kernel_(std::move(kernel)) {
  fda_state_ = FrequencyState::initial(spec_.initial_frequency_hz, spec_.fda);
  auto snap = std::make_shared<TaskSnapshot>();
  snap->metrics.task_id = spec_.task_id;
  snap->metrics.service = spec_.service;
  snap->metrics.instance = spec_.instance;
  snap->metrics.frequency_hz = fda_state_.frequency_hz;
  snapshot_ = std::move(snap);
  local_.meta().service = spec_.service;
  kernel_finished_ = kernel_->finished();
}

TaskRunner::~TaskRunner() { stop_kernel(); }

std::unique_ptr<TaskRunner> TaskRunner::create(TaskSpec spec) {
  const KernelKind kind = spec.resolved_kernel();
  auto kernel = kernel_start(kind, spec.kernel, spec.initial_frequency_hz);
  return std::make_unique<TaskRunner>(std::move(spec), std::move(kernel));
}

std::shared_ptr<const TaskSnapshot> TaskRunner::snapshot() const {
  std::lock_guard lock(snap_mu_);
  return snapshot_;
}

void TaskRunner::publish(std::shared_ptr<const TaskSnapshot> snap) {
  std::lock_guard lock(snap_mu_);
  snapshot_ = std::move(snap);
}

LocalFlamegraph TaskRunner::local_flamegraph() const {
  std::lock_guard lock(graph_mu_);
  return LocalFlamegraph{emit_folded(local_), local_.total(), local_window_index_};
}

void TaskRunner::stop_kernel() {
  if (kernel_) kernel_->stop();
}

TaskState TaskRunner::state() const {
  std::lock_guard lock(state_mu_);
  return state_;
}

std::string TaskRunner::failure_reason() const {
  std::lock_guard lock(state_mu_);
  return failure_reason_;
}

bool TaskRunner::transition(TaskState to, const std::string& reason) {
  std::lock_guard lock(state_mu_);
  if (!is_legal_transition(state_, to)) return false;
  state_ = to;
  if (to == TaskState::kFailed) failure_reason_ = reason;
  return true;
}

std::shared_ptr<const TaskSnapshot> TaskRunner::run_window() {
  FoldedProfile window;
  try {
    window = kernel_->poll_window();
  } catch (const Error& e) {
    transition(TaskState::kFailed, std::string(error_code_name(e.code())) + ": " + e.what());
    kernel_->stop();
    throw;
  }
  const bool finished = kernel_->finished();

  auto snap = std::make_shared<TaskSnapshot>(*snapshot());
  TaskMetrics& m = snap->metrics;
  const std::uint64_t window_index = window.meta().window_index;
  const double window_hz = window.meta().frequency_hz;
  m.windows_completed += 1;
  snap->last_window_index = window_index;

  if (window.empty()) {
    m.js_divergence.reset();
    kernel_->set_frequency(fda_state_.frequency_hz);
    publish(snap);
    kernel_finished_ = finished;
    return snap;
  }

  PruneResult pruned = prune(window, spec_.fsp_percentile);
  const FunctionTotals totals = function_totals(pruned.profile);
  const std::uint64_t window_total = totals.total_self();

  latest_share_.clear();
  for (const auto& [name, counts] : totals.entries) {
    if (counts.self_samples == 0) continue;
    auto& cum = cumulative_[name];
    cum.samples += counts.self_samples;
    cum.cpu_seconds += cpu_time_seconds(counts.self_samples, window_hz);
    latest_share_[name] = static_cast<double>(counts.self_samples) / static_cast<double>(window_total);
  }

  const HotspotDistribution dist = hotspot_distribution(totals, spec_.fda.k, window_index);
  if (spec_.fda_enabled) {
    const FdaStep step = next_frequency(fda_state_, dist, spec_.fda);
    fda_state_ = step.state;
    m.js_divergence = step.divergence;
  } else {
    m.js_divergence.reset();
    if (fda_state_.last_distribution) m.js_divergence = js_divergence(*fda_state_.last_distribution, dist);
    fda_state_.last_distribution = dist;
  }
  kernel_->set_frequency(fda_state_.frequency_hz);

  std::vector<std::pair<std::string_view, const Cumulative*>> ranked;
  ranked.reserve(cumulative_.size());
  for (const auto& [name, cum] : cumulative_) ranked.emplace_back(name, &cum);
  const std::size_t keep = std::min(spec_.top_k_exported, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                    [](const auto& a, const auto& b) {
                      if (a.second->samples != b.second->samples) return a.second->samples > b.second->samples;
                      return a.first < b.first;
                    });
  m.functions.clear();
  for (std::size_t i = 0; i < keep; ++i) {
    FunctionMetric fm;
    fm.function = std::string(ranked[i].first);
    fm.samples = ranked[i].second->samples;
    fm.cpu_seconds = ranked[i].second->cpu_seconds;
    auto share = latest_share_.find(ranked[i].first);
    fm.share = share == latest_share_.end() ? 0.0 : share->second;
    m.functions.push_back(std::move(fm));
  }
  m.frequency_hz = fda_state_.frequency_hz;
  m.pruned_threads = pruned.report.discarded_threads;
  snap->last_prune = pruned.report;
  snap->post_prune_samples += window_total;

  const Flamegraph window_graph = Flamegraph::build(pruned.profile, false);
  {
    std::lock_guard lock(graph_mu_);
    local_.merge_from(window_graph);
    local_.meta().window_index = window_index;
    local_window_index_ = window_index;
  }
  if (!data_dir_.empty()) write_local_files(window_index);

  publish(snap);
  kernel_finished_ = finished;
  return snap;
}

void TaskRunner::write_local_files(std::uint64_t window_index) {
  std::string folded;
  std::string json_text;
  {
    std::lock_guard lock(graph_mu_);
    folded = emit_folded(local_);
    json_text = emit_json(local_);
  }
  const std::string stem = spec_.service + "_" + std::to_string(window_index) + "_local";
  write_file_atomic(data_dir_ / (stem + ".folded"), folded);
  write_file_atomic(data_dir_ / (stem + ".json"), json_text);
}

// ---------------------------------------------------------------------------
// Agent

struct MetricsServer {
  httplib::Server server;
  std::thread thread;
};

Agent::Agent(AgentOptions options) : options_(std::move(options)) {}

Agent::~Agent() { shutdown(); }

void Agent::serve() {
  command_server_ = std::make_unique<LineServer>(options_.bind_address, options_.command_port,
                                                 [this](std::string_view line) { return handle_line(line); });
  command_port_ = command_server_->port();

  metrics_server_ = std::make_unique<MetricsServer>();
  auto& srv = metrics_server_->server;
  srv.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(exposition(), "text/plain; version=0.0.4; charset=utf-8");
  });
  int port = 0;
  if (options_.metrics_port == 0) {
    port = srv.bind_to_any_port(options_.bind_address);
  } else if (srv.bind_to_port(options_.bind_address, options_.metrics_port)) {
    port = options_.metrics_port;
  }
  if (port <= 0) {
    command_server_->stop();
    throw Error(ErrorCode::kConnectionFailed,
                "cannot bind metrics port " + options_.bind_address + ":" + std::to_string(options_.metrics_port));
  }
  metrics_port_ = static_cast<std::uint16_t>(port);
  metrics_server_->thread = std::thread([&srv] { srv.listen_after_bind(); });
}

void Agent::shutdown() {
  if (command_server_) command_server_->stop();
  std::vector<std::shared_ptr<Task>> tasks;
  {
    std::lock_guard lock(tasks_mu_);
    for (auto& [id, t] : tasks_) tasks.push_back(t);
  }
  for (auto& t : tasks) {
    const bool was_running = t->runner->transition(TaskState::kStopping);
    end_loop(*t);
    t->runner->stop_kernel();
    if (was_running) t->runner->transition(TaskState::kStopped);
  }
  if (metrics_server_) {
    metrics_server_->server.stop();
    if (metrics_server_->thread.joinable()) metrics_server_->thread.join();
    metrics_server_.reset();
  }
}

std::string Agent::exposition() const {
  std::vector<std::shared_ptr<TaskRunner>> runners;
  {
    std::lock_guard lock(tasks_mu_);
    for (const auto& [id, t] : tasks_) runners.push_back(t->runner);
  }
  std::vector<TaskMetrics> metrics;
  metrics.reserve(runners.size());
  for (const auto& r : runners) metrics.push_back(r->snapshot()->metrics);
  return render_exposition(metrics);
}

std::string Agent::handle_line(std::string_view line) {
  json message;
  try {
    message = json::parse(line);
  } catch (const json::parse_error& e) {
    return error_response("BadRequest", std::string("invalid JSON: ") + e.what()).dump();
  }
  return handle_command(message).dump();
}

json Agent::handle_command(const json& message) {
  try {
    if (!message.is_object()) return error_response("BadRequest", "message must be a JSON object");
    if (!options_.token.empty()) {
      auto tok = message.find("token");
      if (tok == message.end() || !tok->is_string() || tok->get<std::string>() != options_.token) {
        return error_response(error_code_name(ErrorCode::kUnauthorized), "missing or invalid token");
      }
    }
    auto type_it = message.find("type");
    if (type_it == message.end() || !type_it->is_string()) return error_response("BadRequest", "missing type");
    const std::string type = type_it->get<std::string>();
    if (type == "STATUS") return status(message);

    auto id_it = message.find("task_id");
    if (id_it == message.end() || !id_it->is_string() || id_it->get<std::string>().empty()) {
      return error_response("BadRequest", "missing task_id");
    }
    const std::string task_id = id_it->get<std::string>();
    if (type == "START") return start(message);
    if (type == "STOP") return stop(task_id);
    if (type == "PULL_FLAMEGRAPH") return pull(task_id);
    return error_response("BadRequest", "unknown message type '" + type + "'");
  } catch (const Error& e) {
    return error_response(error_code_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_response("Internal", e.what());
  }
}

std::shared_ptr<Agent::Task> Agent::find(const std::string& task_id) const {
  std::lock_guard lock(tasks_mu_);
  auto it = tasks_.find(task_id);
  return it == tasks_.end() ? nullptr : it->second;
}

json Agent::start(const json& message) {
  const std::string task_id = message.at("task_id").get<std::string>();
  auto cfg = message.find("config");
  if (cfg == message.end()) return error_response(error_code_name(ErrorCode::kBadConfig), "config: required");

  std::lock_guard lock(tasks_mu_);
  if (tasks_.count(task_id)) {
    return error_response(error_code_name(ErrorCode::kDuplicateTaskId), "task '" + task_id + "' already exists");
  }
  std::unique_ptr<TaskRunner> runner;
  try {
    runner = TaskRunner::create(task_spec_from_json(task_id, *cfg));
  } catch (const ConfigError& e) {
    return error_response(error_code_name(ErrorCode::kBadConfig), e.what());
  }
  if (!options_.data_dir.empty()) runner->set_data_dir(options_.data_dir);
  runner->transition(TaskState::kRunning);

  auto task = std::make_shared<Task>();
  task->runner = std::move(runner);
  tasks_.emplace(task_id, task);
  task->loop = std::thread([this, t = task.get()] { window_loop(*t); });
  return json{{"ok", true}, {"task_id", task_id}, {"state", task_state_name(task->runner->state())}};
}

void Agent::window_loop(Task& task) {
  TaskRunner& runner = *task.runner;
  const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(runner.spec().window_seconds));
  auto deadline = std::chrono::steady_clock::now() + period;
  for (;;) {
    {
      std::unique_lock lock(task.mu);
      if (task.cv.wait_until(lock, deadline, [&] { return task.stop_requested; })) return;
    }
    try {
      runner.run_window();
    } catch (const std::exception& e) {
      runner.transition(TaskState::kFailed, e.what());
      runner.stop_kernel();
      return;
    }
    deadline += period;
    const auto now = std::chrono::steady_clock::now();
    if (deadline < now) deadline = now;
  }
}

void Agent::end_loop(Task& task) {
  {
    std::lock_guard lock(task.mu);
    task.stop_requested = true;
  }
  task.cv.notify_all();
  std::lock_guard join_lock(task.join_mu);
  if (task.loop.joinable()) task.loop.join();
}

json Agent::stop(const std::string& task_id) {
  auto task = find(task_id);
  if (!task) return error_response(error_code_name(ErrorCode::kUnknownTask), "no task '" + task_id + "'");
  TaskRunner& runner = *task->runner;
  if (!runner.transition(TaskState::kStopping)) {
    return error_response(error_code_name(ErrorCode::kInvalidState),
                          "task '" + task_id + "' is " + std::string(task_state_name(runner.state())));
  }
  end_loop(*task);
  if (runner.state() == TaskState::kStopping) {
    try {
      runner.run_window();
    } catch (const std::exception& e) {
      runner.transition(TaskState::kFailed, e.what());
    }
  }
  runner.stop_kernel();
  runner.transition(TaskState::kStopped);

  const LocalFlamegraph local = runner.local_flamegraph();
  json out{{"ok", true},
           {"task_id", task_id},
           {"state", task_state_name(runner.state())},
           {"windows_completed", runner.snapshot()->metrics.windows_completed},
           {"total", local.total},
           {"folded", local.folded}};
  if (runner.state() == TaskState::kFailed) out["reason"] = runner.failure_reason();
  return out;
}

namespace {

json task_status(const TaskRunner& runner) {
  const auto snap = runner.snapshot();
  json j{{"task_id", runner.spec().task_id},
         {"service", runner.spec().service},
         {"instance", runner.spec().instance},
         {"state", task_state_name(runner.state())},
         {"windows_completed", snap->metrics.windows_completed},
         {"frequency_hz", snap->metrics.frequency_hz},
         {"kernel", kernel_kind_name(runner.spec().resolved_kernel())},
         {"kernel_finished", runner.kernel_finished()}};
  if (runner.state() == TaskState::kFailed) j["reason"] = runner.failure_reason();
  return j;
}

json snapshot_summary(const TaskSnapshot& snap) {
  json top = json::array();
  for (const auto& fm : snap.metrics.functions) {
    top.push_back(json{{"function", fm.function},
                       {"samples", fm.samples},
                       {"cpu_seconds", fm.cpu_seconds},
                       {"share", fm.share}});
  }
  json prune_report = nullptr;
  if (snap.last_prune) {
    prune_report = json{{"coverage_percentile", snap.last_prune->coverage_percentile},
                        {"retained_threads", snap.last_prune->retained_threads},
                        {"discarded_threads", snap.last_prune->discarded_threads},
                        {"retained_sample_share", snap.last_prune->retained_sample_share}};
  }
  return json{{"frequency_hz", snap.metrics.frequency_hz},
              {"windows_completed", snap.metrics.windows_completed},
              {"post_prune_samples", snap.post_prune_samples},
              {"top", std::move(top)},
              {"prune", std::move(prune_report)}};
}

}  // namespace

json Agent::status(const json& message) {
  json tasks = json::array();
  auto id_it = message.find("task_id");
  if (id_it != message.end() && !id_it->is_null()) {
    if (!id_it->is_string()) return error_response("BadRequest", "task_id must be a string");
    auto task = find(id_it->get<std::string>());
    if (!task) {
      return error_response(error_code_name(ErrorCode::kUnknownTask), "no task '" + id_it->get<std::string>() + "'");
    }
    tasks.push_back(task_status(*task->runner));
  } else {
    std::vector<std::shared_ptr<Task>> all;
    {
      std::lock_guard lock(tasks_mu_);
      for (const auto& [id, t] : tasks_) all.push_back(t);
    }
    for (const auto& t : all) tasks.push_back(task_status(*t->runner));
  }
  return json{{"ok", true}, {"tasks", std::move(tasks)}};
}

json Agent::pull(const std::string& task_id) {
  auto task = find(task_id);
  if (!task) return error_response(error_code_name(ErrorCode::kUnknownTask), "no task '" + task_id + "'");
  const TaskRunner& runner = *task->runner;
  const LocalFlamegraph local = runner.local_flamegraph();
  return json{{"ok", true},
              {"task_id", task_id},
              {"service", runner.spec().service},
              {"instance", runner.spec().instance},
              {"state", task_state_name(runner.state())},
              {"window_index", local.window_index},
              {"total", local.total},
              {"folded", local.folded},
              {"summary", snapshot_summary(*runner.snapshot())}};
}

}  // namespace atys
