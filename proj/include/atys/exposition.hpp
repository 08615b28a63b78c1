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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace atys {

struct FunctionMetric {
  std::string function;
  std::uint64_t samples = 0;  // cumulative self samples
  double cpu_seconds = 0.0;   // cumulative, each window at its own frequency
  double share = 0.0;         // share in the latest window
};

// Snapshot of one task as exported on the metrics endpoint.
struct TaskMetrics {
  std::string task_id;
  std::string service;
  std::string instance;
  std::vector<FunctionMetric> functions;
  double frequency_hz = 0.0;
  std::optional<double> js_divergence;
  std::uint64_t pruned_threads = 0;
  std::uint64_t windows_completed = 0;
};

// Label value escaping: backslash, double quote and newline.
std::string escape_label_value(std::string_view value);

// Shortest round-trip decimal; NaN and infinities use the text format
// spellings.
std::string format_sample_value(double value);

// Text exposition with HELP/TYPE headers for every family, even when no
// task is running.
std::string render_exposition(std::span<const TaskMetrics> tasks);

}  // namespace atys
