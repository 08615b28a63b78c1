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

#include "atys/kernel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "atys/error.hpp"
#include "exec_kernel.hpp"

namespace atys {

namespace {

__extension__ using u128 = unsigned __int128;

std::string basename_of(std::string_view path) {
  auto slash = path.find_last_of('/');
  return std::string(slash == std::string_view::npos ? path : path.substr(slash + 1));
}

bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

class ReplayKernel final : public Kernel {
 public:
  ReplayKernel(FoldedProfile source, double hz, double window_seconds, ProfileMeta meta)
      : Kernel(KernelKind::kReplay, hz, window_seconds, std::move(meta)),
        source_(std::move(source)),
        emitted_(source_.records().size(), 0) {}

  bool finished() const override { return released_ >= source_.total_samples(); }

 protected:
  FoldedProfile collect(std::uint64_t, double hz) override {
    const std::uint64_t total = source_.total_samples();
    budget_ += hz * window_seconds();
    const auto whole = static_cast<std::uint64_t>(std::floor(budget_));
    budget_ -= static_cast<double>(whole);
    released_ = std::min<std::uint64_t>(total, released_ + whole);

    // Every record advances to floor(released * count / total), so each
    // window mirrors the file's mix and the last window completes it.
    std::vector<TraceRecord> out;
    const auto& records = source_.records();
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto target = static_cast<std::uint64_t>(
          static_cast<u128>(released_) * records[i].count / total);
      if (target > emitted_[i]) {
        out.push_back({records[i].thread, records[i].frames, target - emitted_[i]});
        emitted_[i] = target;
      }
    }
    return FoldedProfile::from_records(std::move(out), meta_);
  }

 private:
  FoldedProfile source_;
  std::vector<std::uint64_t> emitted_;
  std::uint64_t released_ = 0;
  double budget_ = 0.0;
};

class SyntheticKernel final : public Kernel {
 public:
  SyntheticKernel(SyntheticWorkloadConfig workload, double hz, double window_seconds, ProfileMeta meta)
      : Kernel(KernelKind::kSynthetic, hz, window_seconds, std::move(meta)), workload_(std::move(workload)) {}

 protected:
  FoldedProfile collect(std::uint64_t window_index, double hz) override {
    budget_ += hz * window_seconds();
    const auto n = static_cast<std::uint64_t>(std::floor(budget_));
    budget_ -= static_cast<double>(n);
    return workload_.sample(window_index, n, meta_);
  }

 private:
  SyntheticWorkload workload_;
  double budget_ = 0.0;
};

}  // namespace

std::string_view language_name(Language lang) {
  switch (lang) {
    case Language::kJava: return "java";
    case Language::kPython: return "python";
    case Language::kCompiled: return "compiled";
  }
  return "compiled";
}

std::string_view kernel_kind_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::kJvm: return "jvm";
    case KernelKind::kPython: return "python";
    case KernelKind::kSystem: return "system";
    case KernelKind::kReplay: return "replay";
    case KernelKind::kSynthetic: return "synthetic";
    case KernelKind::kExec: return "exec";
  }
  return "exec";
}

std::optional<KernelKind> parse_kernel_kind(std::string_view name) {
  for (auto kind : {KernelKind::kJvm, KernelKind::kPython, KernelKind::kSystem, KernelKind::kReplay,
                    KernelKind::kSynthetic, KernelKind::kExec}) {
    if (kernel_kind_name(kind) == name) return kind;
  }
  return std::nullopt;
}

Language detect_language(const ProcessDescriptor& proc) {
  const std::string exe = basename_of(proc.executable_name);
  const std::string hint = proc.interpreter_hint.value_or("");
  if (exe == "java" || exe.starts_with("java") || contains(hint, "libjvm")) return Language::kJava;
  if (exe.starts_with("python") || exe.starts_with("pypy") || contains(hint, "libpython")) {
    return Language::kPython;
  }
  return Language::kCompiled;
}

KernelKind select_kernel(Language language, std::optional<KernelKind> override_kind) {
  if (override_kind) return *override_kind;
  switch (language) {
    case Language::kJava: return KernelKind::kJvm;
    case Language::kPython: return KernelKind::kPython;
    case Language::kCompiled: return KernelKind::kSystem;
  }
  return KernelKind::kSystem;
}

std::string expand_command_template(std::string_view tmpl, std::string_view pid, double frequency_hz,
                                    double duration_seconds) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    std::size_t open = tmpl.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    std::size_t close = tmpl.find('}', open);
    std::string_view token = close == std::string_view::npos ? std::string_view{} : tmpl.substr(open + 1, close - open - 1);
    if (token == "pid") {
      out.append(pid);
    } else if (token == "frequency") {
      out += format_number(std::round(frequency_hz * 1000.0) / 1000.0);
    } else if (token == "duration") {
      out += format_number(duration_seconds);
    } else {
      out += '{';
      pos = open + 1;
      continue;
    }
    pos = close + 1;
  }
  return out;
}

Kernel::Kernel(KernelKind kind, double frequency_hz, double window_seconds, ProfileMeta meta)
    : meta_(std::move(meta)), kind_(kind), pending_hz_(frequency_hz), window_seconds_(window_seconds) {
  if (!(frequency_hz > 0.0)) throw Error(ErrorCode::kNonPositiveFrequency, "kernel frequency must be positive");
  if (!(window_seconds > 0.0)) throw Error(ErrorCode::kBadConfig, "window_seconds must be positive");
}

void Kernel::set_frequency(double hz) {
  if (!(hz > 0.0)) throw Error(ErrorCode::kNonPositiveFrequency, "kernel frequency must be positive");
  pending_hz_ = hz;
  if (!open_) open_now();
}

void Kernel::open_now() {
  window_hz_ = pending_hz_;
  open_ = true;
  on_open(window_hz_);
}

FoldedProfile Kernel::poll_window() {
  if (!open_) open_now();
  open_ = false;
  const std::uint64_t index = window_index_++;
  FoldedProfile profile = collect(index, window_hz_);
  ProfileMeta meta = meta_;
  meta.frequency_hz = window_hz_;
  meta.window_seconds = window_seconds_;
  meta.window_index = index;
  profile.set_meta(std::move(meta));
  return profile;
}

std::unique_ptr<Kernel> kernel_start(KernelKind kind, const KernelConfig& config, double frequency_hz) {
  std::unique_ptr<Kernel> kernel;
  switch (kind) {
    case KernelKind::kReplay: {
      std::string text = config.replay_text;
      if (!config.replay_path.empty()) {
        std::ifstream in(config.replay_path, std::ios::binary);
        if (!in) throw Error(ErrorCode::kBadConfig, "cannot open replay file " + config.replay_path);
        std::ostringstream buf;
        buf << in.rdbuf();
        text = buf.str();
      }
      FoldedProfile source;
      try {
        source = parse_folded(text, config.replay_format);
      } catch (const MalformedLine& e) {
        throw Error(ErrorCode::kBadConfig, std::string("replay source: ") + e.what());
      }
      kernel = std::make_unique<ReplayKernel>(std::move(source), frequency_hz, config.window_seconds, config.meta);
      break;
    }
    case KernelKind::kSynthetic: {
      try {
        config.synthetic.validate();
      } catch (const Error& e) {
        throw Error(ErrorCode::kBadConfig, std::string("synthetic workload: ") + e.what());
      }
      kernel = std::make_unique<SyntheticKernel>(config.synthetic, frequency_hz, config.window_seconds, config.meta);
      break;
    }
    case KernelKind::kExec: {
      if (config.exec_command.empty()) throw Error(ErrorCode::kBadConfig, "exec kernel needs a command");
      kernel = detail::make_exec_kernel(kind, config.exec_command, config, frequency_hz);
      break;
    }
    case KernelKind::kJvm:
    case KernelKind::kPython:
    case KernelKind::kSystem: {
      auto it = config.exec_templates.find(kind);
      if (it == config.exec_templates.end() || it->second.empty()) {
        throw Error(ErrorCode::kBadConfig,
                    "no command template configured for the " + std::string(kernel_kind_name(kind)) + " kernel");
      }
      kernel = detail::make_exec_kernel(kind, it->second, config, frequency_hz);
      break;
    }
  }
  kernel->set_frequency(frequency_hz);
  return kernel;
}

}  // namespace atys
