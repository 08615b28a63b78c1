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

#include <cstddef>
#include <optional>
#include <string>

#include "atys/fda.hpp"
#include "atys/kernel.hpp"
#include "json.hpp"

namespace atys {

// Everything an agent needs to run one profiling task.
struct TaskSpec {
  std::string task_id;
  std::string service;
  std::string instance;
  std::optional<KernelKind> kernel_kind;  // absent: detect from the process
  KernelConfig kernel;
  double window_seconds = 10.0;
  double initial_frequency_hz = 100.0;
  FdaConfig fda;
  bool fda_enabled = true;
  double fsp_percentile = 99.0;
  std::size_t top_k_exported = 10;

  KernelKind resolved_kernel() const;
};

// Reads the START "config" object. Throws ConfigError with the field path.
TaskSpec task_spec_from_json(const std::string& task_id, const nlohmann::json& config,
                             const std::string& path = "config");

FdaConfig fda_config_from_json(const nlohmann::json& j, const std::string& path, bool* enabled = nullptr);
nlohmann::json fda_config_to_json(const FdaConfig& config, bool enabled = true);

SyntheticWorkloadConfig workload_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json workload_to_json(const SyntheticWorkloadConfig& config);

ProcessDescriptor process_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json process_to_json(const ProcessDescriptor& proc);

namespace json_fields {

// Typed field readers that report ConfigError("<path>.<key>", ...).
double number(const nlohmann::json& obj, const char* key, double fallback, const std::string& path);
std::uint64_t unsigned_integer(const nlohmann::json& obj, const char* key, std::uint64_t fallback,
                               const std::string& path);
std::string string(const nlohmann::json& obj, const char* key, const std::string& fallback,
                   const std::string& path);
bool boolean(const nlohmann::json& obj, const char* key, bool fallback, const std::string& path);
const nlohmann::json* object(const nlohmann::json& obj, const char* key, const std::string& path);
void require_object(const nlohmann::json& j, const std::string& path);

}  // namespace json_fields

}  // namespace atys
