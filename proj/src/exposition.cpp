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

#include "atys/exposition.hpp"

#include <charconv>
#include <cmath>
#include <functional>

namespace atys {

std::string escape_label_value(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  for (char c : value) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
  return out;
}

std::string format_sample_value(double value) {
  if (std::isnan(value)) return "NaN";
  if (std::isinf(value)) return value > 0 ? "+Inf" : "-Inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

struct Family {
  const char* name;
  const char* type;
  const char* help;
};

void header(std::string& out, const Family& f) {
  out += "# HELP ";
  out += f.name;
  out += ' ';
  out += f.help;
  out += "\n# TYPE ";
  out += f.name;
  out += ' ';
  out += f.type;
  out += '\n';
}

void task_labels(std::string& out, const TaskMetrics& t) {
  out += "service=\"" + escape_label_value(t.service) + "\",instance=\"" + escape_label_value(t.instance) +
         "\",task_id=\"" + escape_label_value(t.task_id) + "\"";
}

void sample(std::string& out, const char* name, const TaskMetrics& t, const std::string* function,
            const std::string& value) {
  out += name;
  out += '{';
  task_labels(out, t);
  if (function) out += ",function=\"" + escape_label_value(*function) + "\"";
  out += "} ";
  out += value;
  out += '\n';
}

}  // namespace

std::string render_exposition(std::span<const TaskMetrics> tasks) {
  std::string out;
  using Emit = std::function<void(const TaskMetrics&)>;
  auto family = [&](const Family& f, const Emit& emit) {
    header(out, f);
    for (const auto& t : tasks) emit(t);
  };

  family({"atys_function_samples_total", "counter", "Cumulative self samples per hot function."},
         [&](const TaskMetrics& t) {
           for (const auto& fm : t.functions)
             sample(out, "atys_function_samples_total", t, &fm.function, std::to_string(fm.samples));
         });
  family({"atys_function_cpu_seconds_total", "counter", "Cumulative estimated CPU seconds per hot function."},
         [&](const TaskMetrics& t) {
           for (const auto& fm : t.functions)
             sample(out, "atys_function_cpu_seconds_total", t, &fm.function, format_sample_value(fm.cpu_seconds));
         });
  family({"atys_function_share", "gauge", "Self-time share per hot function in the latest window."},
         [&](const TaskMetrics& t) {
           for (const auto& fm : t.functions)
             sample(out, "atys_function_share", t, &fm.function, format_sample_value(fm.share));
         });
  family({"atys_sampling_frequency_hz", "gauge", "Sampling frequency scheduled for the next window."},
         [&](const TaskMetrics& t) {
           sample(out, "atys_sampling_frequency_hz", t, nullptr, format_sample_value(t.frequency_hz));
         });
  family({"atys_js_divergence", "gauge", "Hotspot divergence between the two latest windows."},
         [&](const TaskMetrics& t) {
           if (t.js_divergence)
             sample(out, "atys_js_divergence", t, nullptr, format_sample_value(*t.js_divergence));
         });
  family({"atys_pruned_threads", "gauge", "Threads discarded by pruning in the latest window."},
         [&](const TaskMetrics& t) {
           sample(out, "atys_pruned_threads", t, nullptr, std::to_string(t.pruned_threads));
         });
  family({"atys_windows_completed_total", "counter", "Sampling windows processed."},
         [&](const TaskMetrics& t) {
           sample(out, "atys_windows_completed_total", t, nullptr, std::to_string(t.windows_completed));
         });
  return out;
}

}  // namespace atys
