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

#include "atys/controller.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <charconv>
#include <set>
#include <sstream>
#include <thread>

#include "atys/error.hpp"
#include "atys/fileio.hpp"
#include "atys/net.hpp"
#include "atys/task_codec.hpp"

namespace atys {

using nlohmann::json;
namespace jf = json_fields;

namespace {

std::string indexed(const char* field, std::size_t i) { return std::string(field) + "[" + std::to_string(i) + "]"; }

bool valid_task_id(std::string_view id) {
  if (id.empty() || id.size() > 128 || id.front() == '.') return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
           c == '.';
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TaskConfig parse_task_config(const json& j) {
  jf::require_object(j, "config");
  TaskConfig c;
  c.service = jf::string(j, "service", "", "");
  if (c.service.empty()) throw ConfigError("service", "must be non-empty");
  if (!is_valid_frame_name(c.service) || c.service.find('/') != std::string::npos) {
    throw ConfigError("service", "must be a plain identifier");
  }
  c.task_id = jf::string(j, "task_id", "", "");
  if (!c.task_id.empty() && !valid_task_id(c.task_id)) {
    throw ConfigError("task_id", "use letters, digits, '-', '_' or '.'");
  }
  c.token = jf::string(j, "token", "", "");

  SamplingConfig& s = c.sampling;
  if (const json* sj = jf::object(j, "sampling", "")) {
    s.window_seconds = jf::number(*sj, "window_seconds", s.window_seconds, "sampling");
    if (!(s.window_seconds > 0.0)) throw ConfigError("sampling.window_seconds", "must be positive");
    s.fsp_percentile = jf::number(*sj, "fsp_percentile", s.fsp_percentile, "sampling");
    if (!(s.fsp_percentile > 0.0 && s.fsp_percentile <= 100.0)) {
      throw ConfigError("sampling.fsp_percentile", "must be in (0, 100]");
    }
    s.top_k = jf::unsigned_integer(*sj, "top_k", s.top_k, "sampling");
    if (s.top_k == 0) throw ConfigError("sampling.top_k", "must be positive");
    if (const json* fda = jf::object(*sj, "fda", "sampling")) {
      s.fda = fda_config_from_json(*fda, "sampling.fda", &s.fda_enabled);
    }
    s.initial_frequency_hz = jf::number(*sj, "initial_frequency_hz", s.initial_frequency_hz, "sampling");
  }
  if (!(s.initial_frequency_hz >= s.fda.f_min_hz && s.initial_frequency_hz <= s.fda.f_max_hz)) {
    throw ConfigError("sampling.initial_frequency_hz", "must lie within [f_min_hz, f_max_hz]");
  }

  if (const json* aj = jf::object(j, "aggregation", "")) {
    const auto every = jf::unsigned_integer(*aj, "pull_every_n_windows", 1, "aggregation");
    if (every == 0 || every > 0xffffffffULL) throw ConfigError("aggregation.pull_every_n_windows", "must be >= 1");
    c.aggregation.pull_every_n_windows = static_cast<std::uint32_t>(every);
    c.aggregation.group_size = jf::unsigned_integer(*aj, "group_size", 0, "aggregation");
    if (c.aggregation.group_size == 1) throw ConfigError("aggregation.group_size", "must be 0 (flat) or >= 2");
  }

  auto targets = j.find("targets");
  if (targets == j.end() || !targets->is_array()) throw ConfigError("targets", "expected an array");
  if (targets->empty()) throw ConfigError("targets", "at least one target is required");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < targets->size(); ++i) {
    const std::string path = indexed("targets", i);
    const json& tj = (*targets)[i];
    jf::require_object(tj, path);
    TargetConfig t;
    t.host = jf::string(tj, "host", t.host, path);
    if (t.host.empty()) throw ConfigError(path + ".host", "must be non-empty");
    const auto port = jf::unsigned_integer(tj, "command_port", 0, path);
    if (port == 0 || port > 65535) throw ConfigError(path + ".command_port", "must be in [1, 65535]");
    t.command_port = static_cast<std::uint16_t>(port);
    t.instance_id = jf::string(tj, "instance_id", "", path);
    if (t.instance_id.empty()) throw ConfigError(path + ".instance_id", "must be non-empty");
    if (!seen.insert(t.instance_id).second) throw ConfigError(path + ".instance_id", "duplicate instance_id");
    if (const json* p = jf::object(tj, "process", path)) t.process = *p;
    if (const json* k = jf::object(tj, "kernel", path)) t.kernel = *k;
    if (const json* e = jf::object(tj, "exec_templates", path)) t.exec_templates = *e;
    if (t.process.is_null() && t.kernel.is_null()) {
      throw ConfigError(path, "needs a process descriptor or a kernel override");
    }
    c.targets.push_back(std::move(t));
  }

  // The agent-side reader checks kernel and process details; map its paths
  // back onto this target.
  for (std::size_t i = 0; i < c.targets.size(); ++i) {
    try {
      task_spec_from_json("validate", agent_task_config(c, c.targets[i]), "config");
    } catch (const ConfigError& e) {
      std::string field = e.field_path();
      const std::string prefix = "config";
      if (field.rfind(prefix, 0) == 0) field = indexed("targets", i) + field.substr(prefix.size());
      throw ConfigError(field, e.reason());
    }
  }
  return c;
}

TaskConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return parse_task_config(j);
}

json task_config_to_json(const TaskConfig& c) {
  json targets = json::array();
  for (const auto& t : c.targets) {
    json tj{{"host", t.host}, {"command_port", t.command_port}, {"instance_id", t.instance_id}};
    if (!t.process.is_null()) tj["process"] = t.process;
    if (!t.kernel.is_null()) tj["kernel"] = t.kernel;
    if (!t.exec_templates.is_null()) tj["exec_templates"] = t.exec_templates;
    targets.push_back(std::move(tj));
  }
  json j{{"service", c.service},
         {"targets", std::move(targets)},
         {"sampling",
          {{"initial_frequency_hz", c.sampling.initial_frequency_hz},
           {"window_seconds", c.sampling.window_seconds},
           {"fda", fda_config_to_json(c.sampling.fda, c.sampling.fda_enabled)},
           {"fsp_percentile", c.sampling.fsp_percentile},
           {"top_k", c.sampling.top_k}}},
         {"aggregation",
          {{"pull_every_n_windows", c.aggregation.pull_every_n_windows},
           {"group_size", c.aggregation.group_size}}}};
  if (!c.task_id.empty()) j["task_id"] = c.task_id;
  if (!c.token.empty()) j["token"] = c.token;
  return j;
}

json agent_task_config(const TaskConfig& c, const TargetConfig& t) {
  json j{{"service", c.service},
         {"instance", t.instance_id},
         {"window_seconds", c.sampling.window_seconds},
         {"initial_frequency_hz", c.sampling.initial_frequency_hz},
         {"fsp_percentile", c.sampling.fsp_percentile},
         {"top_k", c.sampling.top_k},
         {"fda", fda_config_to_json(c.sampling.fda, c.sampling.fda_enabled)}};
  if (!t.process.is_null()) j["process"] = t.process;
  if (!t.kernel.is_null()) j["kernel"] = t.kernel;
  if (!t.exec_templates.is_null()) j["exec_templates"] = t.exec_templates;
  return j;
}

// ---------------------------------------------------------------------------
// Fan-out

void bounded_parallel_for(std::size_t n, std::size_t max_in_flight, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(n, std::max<std::size_t>(1, max_in_flight));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::size_t FanoutSummary::succeeded() const noexcept {
  return static_cast<std::size_t>(std::count_if(instances.begin(), instances.end(), [](const auto& o) { return o.ok; }));
}

json FanoutSummary::to_json() const {
  json list = json::array();
  for (const auto& o : instances) {
    json j{{"instance_id", o.instance_id}, {"ok", o.ok}};
    if (!o.state.empty()) j["state"] = o.state;
    if (!o.ok) j["error"] = {{"code", o.error_code}, {"message", o.error_message}};
    list.push_back(std::move(j));
  }
  return json{{"task_id", task_id},
              {"operation", operation},
              {"succeeded", succeeded()},
              {"failed", instances.size() - succeeded()},
              {"instances", std::move(list)}};
}

Controller::Controller(ControllerOptions options) : options_(std::move(options)) {}

std::filesystem::path Controller::registry_path(const std::string& task_id) const {
  return options_.state_dir / "tasks" / (task_id + ".json");
}

TaskConfig Controller::load_task(const std::string& task_id) const {
  if (!valid_task_id(task_id)) throw Error(ErrorCode::kUnknownTask, "unknown task '" + task_id + "'");
  const auto path = registry_path(task_id);
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kUnknownTask, "unknown task '" + task_id + "'");
  TaskConfig c = parse_task_config(json::parse(read_file(path)));
  c.task_id = task_id;
  return c;
}

std::vector<InstanceOutcome> Controller::fan_out(const TaskConfig& config, const std::vector<std::size_t>& targets,
                                                 const std::function<json(const TargetConfig&)>& message) {
  std::vector<InstanceOutcome> out(targets.size());
  bounded_parallel_for(targets.size(), options_.max_in_flight, [&](std::size_t i) {
    const TargetConfig& t = config.targets[targets[i]];
    InstanceOutcome& o = out[i];
    o.instance_id = t.instance_id;
    try {
      json msg = message(t);
      if (!config.token.empty()) msg["token"] = config.token;
      const std::string reply = line_request(t.host, t.command_port, msg.dump(), options_.timeout);
      o.response = json::parse(reply);
      o.ok = o.response.value("ok", false);
      if (o.ok) {
        if (o.response.contains("state")) o.state = o.response["state"].get<std::string>();
      } else {
        const json& err = o.response.at("error");
        o.error_code = err.value("code", "Unknown");
        o.error_message = err.value("message", "");
      }
    } catch (const Error& e) {
      o.ok = false;
      o.error_code = std::string(error_code_name(e.code()));
      o.error_message = e.what();
    } catch (const std::exception& e) {
      o.ok = false;
      o.error_code = "BadResponse";
      o.error_message = e.what();
    }
  });
  return out;
}

namespace {

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::string generate_task_id(const std::string& service) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return service + "-" + std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(now).count());
}

}  // namespace

FanoutSummary Controller::start_task(TaskConfig config) {
  if (config.task_id.empty()) config.task_id = generate_task_id(config.service);
  if (!valid_task_id(config.task_id)) throw ConfigError("task_id", "use letters, digits, '-', '_' or '.'");
  if (std::filesystem::exists(registry_path(config.task_id))) {
    throw Error(ErrorCode::kDuplicateTaskId, "task '" + config.task_id + "' is already registered");
  }
  write_file_atomic(registry_path(config.task_id), task_config_to_json(config).dump(2) + "\n");

  FanoutSummary summary{config.task_id, "start", {}};
  summary.instances = fan_out(config, all_indices(config.targets.size()), [&](const TargetConfig& t) {
    return json{{"type", "START"}, {"task_id", config.task_id}, {"config", agent_task_config(config, t)}};
  });
  return summary;
}

FanoutSummary Controller::stop_task(const std::string& task_id) {
  const TaskConfig config = load_task(task_id);
  FanoutSummary summary{task_id, "stop", {}};
  summary.instances = fan_out(config, all_indices(config.targets.size()), [&](const TargetConfig&) {
    return json{{"type", "STOP"}, {"task_id", task_id}};
  });
  for (auto& o : summary.instances) {
    if (o.ok) o.response.erase("folded");
  }
  return summary;
}

FanoutSummary Controller::status(const std::string& task_id) {
  const TaskConfig config = load_task(task_id);
  FanoutSummary summary{task_id, "status", {}};
  summary.instances = fan_out(config, all_indices(config.targets.size()), [&](const TargetConfig&) {
    return json{{"type", "STATUS"}, {"task_id", task_id}};
  });
  for (auto& o : summary.instances) {
    if (o.ok && o.response.contains("tasks") && !o.response["tasks"].empty()) {
      o.state = o.response["tasks"][0].value("state", "");
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Aggregation

GlobalAggregator::GlobalAggregator(std::size_t group_size) : stream_(group_size) {}

std::uint64_t GlobalAggregator::add_local(std::string_view folded) {
  Flamegraph local = flamegraph_from_folded(folded);
  const std::uint64_t total = local.total();
  add_local(local);
  return total;
}

void GlobalAggregator::add_local(const Flamegraph& local) {
  sum_totals_ += local.total();
  stream_.add(local);
}

Flamegraph GlobalAggregator::finish() {
  if (stream_.added() == 0) throw Error(ErrorCode::kNoData, "no local flamegraphs to aggregate");
  return stream_.finish();
}

json GlobalReport::to_json() const {
  json inst = json::array();
  for (const auto& s : instances) {
    inst.push_back(json{{"instance_id", s.instance_id},
                        {"total", s.total},
                        {"window_index", s.window_index},
                        {"summary", s.summary}});
  }
  json failures = json::array();
  for (const auto& f : failed) {
    failures.push_back(json{{"instance_id", f.instance_id}, {"code", f.error_code}, {"message", f.error_message}});
  }
  return json{{"task_id", task_id},
              {"service", service},
              {"window_index", window_index},
              {"global_total", global_total},
              {"sum_local_totals", sum_local_totals},
              {"group_size", group_size},
              {"aggregations_per_round", hierarchy.aggregations_per_round},
              {"instances", std::move(inst)},
              {"failed_instances", std::move(failures)},
              {"timing", {{"pull_seconds", pull_seconds}, {"merge_seconds", merge_seconds}}},
              {"artifacts",
               {{"folded", folded_path.string()}, {"json", json_path.string()}, {"report", report_path.string()}}}};
}

GlobalReport Controller::aggregate_global(const std::string& task_id, const AggregateOptions& options) {
  using Clock = std::chrono::steady_clock;
  const TaskConfig config = load_task(task_id);
  GlobalReport report;
  report.task_id = task_id;
  report.service = config.service;
  report.group_size = options.group_size.value_or(config.aggregation.group_size);
  if (report.group_size == 1) throw Error(ErrorCode::kInvalidArgument, "group size must be 0 (flat) or >= 2");

  GlobalAggregator aggregator(report.group_size);
  const std::size_t n = config.targets.size();
  const std::size_t batch = std::max<std::size_t>(1, options_.max_in_flight);
  double pull_seconds = 0.0;
  double merge_seconds = 0.0;
  for (std::size_t first = 0; first < n; first += batch) {
    std::vector<std::size_t> chunk;
    for (std::size_t i = first; i < std::min(n, first + batch); ++i) chunk.push_back(i);
    const auto t0 = Clock::now();
    auto outcomes = fan_out(config, chunk, [&](const TargetConfig&) {
      return json{{"type", "PULL_FLAMEGRAPH"}, {"task_id", task_id}};
    });
    const auto t1 = Clock::now();
    for (auto& o : outcomes) {
      if (!o.ok) {
        report.failed.push_back(std::move(o));
        continue;
      }
      try {
        InstanceSummary s;
        s.instance_id = o.instance_id;
        s.total = aggregator.add_local(o.response.at("folded").get<std::string>());
        s.window_index = o.response.value("window_index", std::uint64_t{0});
        s.summary = o.response.value("summary", json::object());
        report.window_index = std::max(report.window_index, s.window_index);
        report.instances.push_back(std::move(s));
      } catch (const std::exception& e) {
        o.ok = false;
        o.error_code = "BadResponse";
        o.error_message = e.what();
        o.response = nullptr;
        report.failed.push_back(std::move(o));
      }
    }
    pull_seconds += std::chrono::duration<double>(t1 - t0).count();
    merge_seconds += std::chrono::duration<double>(Clock::now() - t1).count();
  }
  if (aggregator.locals() == 0) {
    std::string detail;
    for (const auto& f : report.failed) detail += " " + f.instance_id + "(" + f.error_code + ")";
    throw Error(ErrorCode::kNoData, "no instance returned a flamegraph:" + detail);
  }

  const auto t2 = Clock::now();
  Flamegraph global = aggregator.finish();
  global.meta().service = config.service;
  global.meta().window_index = report.window_index;
  report.hierarchy = aggregator.stats();
  report.global_total = global.total();
  report.sum_local_totals = aggregator.sum_local_totals();
  if (report.global_total != report.sum_local_totals) {
    throw Error(ErrorCode::kInvalidArgument, "global total does not match the pulled local totals");
  }

  const std::string stem = config.service + "_" + std::to_string(report.window_index);
  report.folded_path = options.out_dir / (stem + "_global.folded");
  report.json_path = options.out_dir / (stem + "_global.json");
  report.report_path = options.out_dir / (stem + "_report.json");
  write_file_atomic(report.folded_path, emit_folded(global));
  write_file_atomic(report.json_path, emit_json(global));
  report.pull_seconds = pull_seconds;
  report.merge_seconds = merge_seconds + std::chrono::duration<double>(Clock::now() - t2).count();
  write_file_atomic(report.report_path, report.to_json().dump(2) + "\n");
  return report;
}

// ---------------------------------------------------------------------------
// Calibration

namespace {

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

std::vector<CalibrationSample> read_calibration_csv(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<CalibrationSample> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    for (;;) {
      auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    CalibrationSample s;
    const bool numeric = cells.size() == 3 && parse_double(cells[0], s.p) &&
                         parse_double(cells[1], s.aggregation_time) && parse_double(cells[2], s.mape);
    if (!numeric) {
      if (first_content) {
        first_content = false;
        continue;  // header
      }
      throw Error(ErrorCode::kInvalidArgument,
                  path.string() + ":" + std::to_string(line_no) + ": expected 3 numeric columns p,time,mape");
    }
    first_content = false;
    if (!(s.p >= 0.0 && s.p <= 100.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  path.string() + ":" + std::to_string(line_no) + ": p must be in [0, 100]");
    }
    rows.push_back(s);
  }
  return rows;
}

CalibrationReport calibrate(std::span<const CalibrationSample> samples, double epsilon) {
  if (samples.size() < 3) {
    throw Error(ErrorCode::kDegenerateInput,
                "calibration needs at least 3 rows, got " + std::to_string(samples.size()));
  }
  std::vector<CurvePoint> time_points;
  std::vector<CurvePoint> mape_points;
  for (const auto& s : samples) {
    time_points.push_back({s.p, s.aggregation_time});
    mape_points.push_back({s.p, s.mape});
  }
  CalibrationReport r;
  r.rows = samples.size();
  r.epsilon = epsilon;
  r.time_model = fit_linear(time_points);
  r.mape_model = fit_log(mape_points);
  r.p_star = solve_min_p(r.mape_model, epsilon);
  return r;
}

CalibrationReport calibrate(const std::filesystem::path& csv_path, double epsilon) {
  const auto rows = read_calibration_csv(csv_path);
  try {
    return calibrate(std::span<const CalibrationSample>(rows), epsilon);
  } catch (const InfeasibleTarget& e) {
    throw InfeasibleTarget(e.mape_at_max(), csv_path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(e.code(), csv_path.string() + ": " + e.what());
  }
}

json CalibrationReport::to_json() const {
  return json{{"rows", rows},
              {"time_model",
               {{"form", "slope * p + intercept"},
                {"slope", time_model.slope},
                {"intercept", time_model.intercept},
                {"fit_mape_percent", time_model.fit_mape}}},
              {"mape_model",
               {{"form", "a * ln(b * p + c)"},
                {"a", mape_model.a},
                {"b", mape_model.b},
                {"c", mape_model.c},
                {"fit_mape_percent", mape_model.fit_mape}}},
              {"epsilon", epsilon},
              {"p_star", p_star},
              {"predicted_mape_at_p_star", mape_model(p_star)},
              {"predicted_time_at_p_star", time_model(p_star)}};
}

}  // namespace atys
