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

#include "atys/task_codec.hpp"

#include <cmath>

#include "atys/error.hpp"

namespace atys {

using nlohmann::json;

namespace json_fields {

namespace {

std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

}  // namespace

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
}

double number(const json& obj, const char* key, double fallback, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_number()) throw ConfigError(join(path, key), "expected a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ConfigError(join(path, key), "expected a finite number");
  return v;
}

std::uint64_t unsigned_integer(const json& obj, const char* key, std::uint64_t fallback, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (it->is_number_unsigned()) return it->get<std::uint64_t>();
  if (it->is_number_integer() && it->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(it->get<std::int64_t>());
  throw ConfigError(join(path, key), "expected a non-negative integer");
}

std::string string(const json& obj, const char* key, const std::string& fallback, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw ConfigError(join(path, key), "expected a string");
  return it->get<std::string>();
}

bool boolean(const json& obj, const char* key, bool fallback, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_boolean()) throw ConfigError(join(path, key), "expected a boolean");
  return it->get<bool>();
}

const json* object(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  if (!it->is_object()) throw ConfigError(join(path, key), "expected an object");
  return &*it;
}

}  // namespace json_fields

namespace jf = json_fields;

KernelKind TaskSpec::resolved_kernel() const {
  return select_kernel(detect_language(kernel.process), kernel_kind);
}

FdaConfig fda_config_from_json(const json& j, const std::string& path, bool* enabled) {
  jf::require_object(j, path);
  FdaConfig c;
  c.theta = jf::number(j, "theta", c.theta, path);
  if (!(c.theta > 0.0 && c.theta < 1.0)) throw ConfigError(path + ".theta", "must be in (0,1)");
  c.lambda = jf::number(j, "lambda", c.lambda, path);
  if (!(c.lambda > 0.0 && c.lambda < 1.0)) throw ConfigError(path + ".lambda", "must be in (0,1)");
  const auto stable = jf::unsigned_integer(j, "stable_windows_required", c.stable_windows_required, path);
  if (stable == 0 || stable > 1000000) throw ConfigError(path + ".stable_windows_required", "must be a positive integer");
  c.stable_windows_required = static_cast<std::uint32_t>(stable);
  c.k = jf::unsigned_integer(j, "k", c.k, path);
  if (c.k == 0) throw ConfigError(path + ".k", "must be positive");
  c.f_min_hz = jf::number(j, "f_min_hz", c.f_min_hz, path);
  if (!(c.f_min_hz > 0.0)) throw ConfigError(path + ".f_min_hz", "must be positive");
  c.f_max_hz = jf::number(j, "f_max_hz", c.f_max_hz, path);
  if (!(c.f_max_hz > c.f_min_hz)) throw ConfigError(path + ".f_max_hz", "must be greater than f_min_hz");
  if (enabled) *enabled = jf::boolean(j, "enabled", true, path);
  return c;
}

json fda_config_to_json(const FdaConfig& c, bool enabled) {
  return json{{"enabled", enabled},
              {"theta", c.theta},
              {"lambda", c.lambda},
              {"stable_windows_required", c.stable_windows_required},
              {"k", c.k},
              {"f_min_hz", c.f_min_hz},
              {"f_max_hz", c.f_max_hz}};
}

namespace {

CallNode call_node_from_json(const json& j, const std::string& path) {
  jf::require_object(j, path);
  CallNode node;
  node.name = jf::string(j, "name", "", path);
  if (!is_valid_frame_name(node.name)) throw ConfigError(path + ".name", "invalid function name");
  node.self_weight = jf::number(j, "self", 0.0, path);
  if (node.self_weight < 0.0) throw ConfigError(path + ".self", "must be non-negative");
  auto it = j.find("children");
  if (it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ConfigError(path + ".children", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      node.children.push_back(call_node_from_json((*it)[i], path + ".children[" + std::to_string(i) + "]"));
    }
  }
  return node;
}

json call_node_to_json(const CallNode& node) {
  json children = json::array();
  for (const auto& c : node.children) children.push_back(call_node_to_json(c));
  return json{{"name", node.name}, {"self", node.self_weight}, {"children", std::move(children)}};
}

}  // namespace

SyntheticWorkloadConfig workload_from_json(const json& j, const std::string& path) {
  jf::require_object(j, path);
  SyntheticWorkloadConfig c;
  c.seed = jf::unsigned_integer(j, "seed", c.seed, path);
  const auto threads = jf::unsigned_integer(j, "thread_count", c.thread_count, path);
  if (threads == 0 || threads > 10000000) throw ConfigError(path + ".thread_count", "must be a positive integer");
  c.thread_count = static_cast<std::uint32_t>(threads);
  c.zipf_exponent = jf::number(j, "zipf_exponent", c.zipf_exponent, path);
  if (!(c.zipf_exponent > 0.0)) throw ConfigError(path + ".zipf_exponent", "must be positive");
  auto tree = j.find("call_tree");
  if (tree == j.end()) throw ConfigError(path + ".call_tree", "required");
  c.call_tree = call_node_from_json(*tree, path + ".call_tree");
  auto phases = j.find("phases");
  if (phases != j.end() && !phases->is_null()) {
    if (!phases->is_array()) throw ConfigError(path + ".phases", "expected an array");
    for (std::size_t i = 0; i < phases->size(); ++i) {
      const std::string ppath = path + ".phases[" + std::to_string(i) + "]";
      const json& pj = (*phases)[i];
      jf::require_object(pj, ppath);
      WorkloadPhase ph;
      const auto dur = jf::unsigned_integer(pj, "duration_windows", 1, ppath);
      if (dur == 0 || dur > 0xffffffffULL) throw ConfigError(ppath + ".duration_windows", "must be a positive integer");
      ph.duration_windows = static_cast<std::uint32_t>(dur);
      if (const json* ov = jf::object(pj, "leaf_weight_overrides", ppath)) {
        for (const auto& [name, w] : ov->items()) {
          if (!w.is_number() || w.get<double>() < 0.0) {
            throw ConfigError(ppath + ".leaf_weight_overrides." + name, "must be a non-negative number");
          }
          ph.leaf_weight_overrides[name] = w.get<double>();
        }
      }
      c.phases.push_back(std::move(ph));
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
  return c;
}

json workload_to_json(const SyntheticWorkloadConfig& c) {
  json phases = json::array();
  for (const auto& ph : c.phases) {
    phases.push_back(json{{"duration_windows", ph.duration_windows}, {"leaf_weight_overrides", ph.leaf_weight_overrides}});
  }
  return json{{"seed", c.seed},
              {"thread_count", c.thread_count},
              {"zipf_exponent", c.zipf_exponent},
              {"call_tree", call_node_to_json(c.call_tree)},
              {"phases", std::move(phases)}};
}

ProcessDescriptor process_from_json(const json& j, const std::string& path) {
  jf::require_object(j, path);
  ProcessDescriptor p;
  auto pid = j.find("pid");
  if (pid != j.end() && pid->is_number_integer()) {
    p.pid = std::to_string(pid->get<std::int64_t>());
  } else {
    p.pid = jf::string(j, "pid", "", path);
  }
  p.executable_name = jf::string(j, "executable", "", path);
  if (p.executable_name.empty()) throw ConfigError(path + ".executable", "must be non-empty");
  if (j.contains("interpreter_hint") && !j["interpreter_hint"].is_null()) {
    p.interpreter_hint = jf::string(j, "interpreter_hint", "", path);
  }
  return p;
}

json process_to_json(const ProcessDescriptor& p) {
  json j{{"pid", p.pid}, {"executable", p.executable_name}};
  if (p.interpreter_hint) j["interpreter_hint"] = *p.interpreter_hint;
  return j;
}

TaskSpec task_spec_from_json(const std::string& task_id, const json& config, const std::string& path) {
  jf::require_object(config, path);
  TaskSpec spec;
  spec.task_id = task_id;
  spec.service = jf::string(config, "service", "", path);
  if (spec.service.empty()) throw ConfigError(path + ".service", "must be non-empty");
  spec.instance = jf::string(config, "instance", "", path);
  if (spec.instance.empty()) throw ConfigError(path + ".instance", "must be non-empty");
  spec.window_seconds = jf::number(config, "window_seconds", spec.window_seconds, path);
  if (!(spec.window_seconds > 0.0)) throw ConfigError(path + ".window_seconds", "must be positive");
  spec.fsp_percentile = jf::number(config, "fsp_percentile", spec.fsp_percentile, path);
  if (!(spec.fsp_percentile > 0.0 && spec.fsp_percentile <= 100.0)) {
    throw ConfigError(path + ".fsp_percentile", "must be in (0, 100]");
  }
  spec.top_k_exported = jf::unsigned_integer(config, "top_k", spec.top_k_exported, path);
  if (spec.top_k_exported == 0) throw ConfigError(path + ".top_k", "must be positive");
  if (const json* fda = jf::object(config, "fda", path)) {
    spec.fda = fda_config_from_json(*fda, path + ".fda", &spec.fda_enabled);
  }
  spec.initial_frequency_hz = jf::number(config, "initial_frequency_hz", spec.initial_frequency_hz, path);
  if (!(spec.initial_frequency_hz > 0.0)) throw ConfigError(path + ".initial_frequency_hz", "must be positive");
  if (spec.initial_frequency_hz < spec.fda.f_min_hz || spec.initial_frequency_hz > spec.fda.f_max_hz) {
    throw ConfigError(path + ".initial_frequency_hz", "must lie within [f_min_hz, f_max_hz]");
  }

  KernelConfig& k = spec.kernel;
  k.window_seconds = spec.window_seconds;
  k.meta.service = spec.service;
  k.meta.instance = spec.instance;
  k.replay_format.thread_mode = ThreadMode::kLeadingFrame;
  k.exec_format.thread_mode = ThreadMode::kLeadingFrame;
  if (const json* proc = jf::object(config, "process", path)) {
    k.process = process_from_json(*proc, path + ".process");
  }
  if (const json* templates = jf::object(config, "exec_templates", path)) {
    for (const auto& [name, cmd] : templates->items()) {
      auto kind = parse_kernel_kind(name);
      if (!kind || !cmd.is_string()) {
        throw ConfigError(path + ".exec_templates." + name, "expected jvm/python/system -> command string");
      }
      k.exec_templates[*kind] = cmd.get<std::string>();
    }
  }
  if (const json* kj = jf::object(config, "kernel", path)) {
    const std::string kpath = path + ".kernel";
    const std::string kind_name = jf::string(*kj, "kind", "", kpath);
    if (!kind_name.empty()) {
      auto kind = parse_kernel_kind(kind_name);
      if (!kind) throw ConfigError(kpath + ".kind", "unknown kernel kind '" + kind_name + "'");
      spec.kernel_kind = kind;
    }
    const bool thread_aware = jf::boolean(*kj, "thread_aware", true, kpath);
    const ThreadMode mode = thread_aware ? ThreadMode::kLeadingFrame : ThreadMode::kNone;
    k.replay_format.thread_mode = mode;
    k.exec_format.thread_mode = mode;
    k.replay_path = jf::string(*kj, "path", "", kpath);
    k.replay_text = jf::string(*kj, "text", "", kpath);
    k.exec_command = jf::string(*kj, "command", "", kpath);
    if (const json* wl = jf::object(*kj, "workload", kpath)) {
      k.synthetic = workload_from_json(*wl, kpath + ".workload");
    } else if (spec.kernel_kind == KernelKind::kSynthetic) {
      throw ConfigError(kpath + ".workload", "required for the synthetic kernel");
    }
    if (spec.kernel_kind == KernelKind::kReplay && k.replay_path.empty() && !kj->contains("text")) {
      throw ConfigError(kpath + ".path", "replay kernel needs a path or inline text");
    }
    if (spec.kernel_kind == KernelKind::kExec && k.exec_command.empty()) {
      throw ConfigError(kpath + ".command", "exec kernel needs a command");
    }
  }
  if (!spec.kernel_kind && k.process.executable_name.empty()) {
    throw ConfigError(path + ".process", "needed to select a kernel when kernel.kind is absent");
  }
  return spec;
}

}  // namespace atys
