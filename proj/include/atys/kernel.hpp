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

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "atys/profile.hpp"
#include "atys/synthetic.hpp"

namespace atys {

enum class Language { kJava, kPython, kCompiled };

enum class KernelKind { kJvm, kPython, kSystem, kReplay, kSynthetic, kExec };

std::string_view language_name(Language lang);
std::string_view kernel_kind_name(KernelKind kind);
// Accepts the names produced by kernel_kind_name ("jvm", "python", ...).
std::optional<KernelKind> parse_kernel_kind(std::string_view name);

struct ProcessDescriptor {
  std::string pid;
  std::string executable_name;
  std::optional<std::string> interpreter_hint;
};

// Matches the executable basename and the interpreter hint against known
// runtime signatures; anything unrecognised is treated as compiled code.
Language detect_language(const ProcessDescriptor& proc);

KernelKind select_kernel(Language language, std::optional<KernelKind> override_kind = std::nullopt);

struct KernelConfig {
  double window_seconds = 10.0;
  ProfileMeta meta;  // service/instance stamped onto every window
  ProcessDescriptor process;

  // Replay: folded text, either inline or loaded from replay_path.
  std::string replay_path;
  std::string replay_text;
  FoldedFormat replay_format;

  SyntheticWorkloadConfig synthetic;

  // Exec: command line with {pid}, {frequency} and {duration} tokens. The
  // jvm/python/system kinds resolve through exec_templates.
  std::string exec_command;
  std::map<KernelKind, std::string> exec_templates;
  FoldedFormat exec_format;
};

// Replaces {pid}, {frequency} and {duration} in a command template.
std::string expand_command_template(std::string_view tmpl, std::string_view pid, double frequency_hz,
                                    double duration_seconds);

// Windowed sampler handle. poll_window() closes the open window and returns
// its samples stamped with the frequency that was in force; the next window
// opens on the following set_frequency() call (or lazily on the next poll).
// A set_frequency() while a window is open takes effect at the next
// boundary.
class Kernel {
 public:
  Kernel(KernelKind kind, double frequency_hz, double window_seconds, ProfileMeta meta);
  virtual ~Kernel() = default;

  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  KernelKind kind() const noexcept { return kind_; }
  double frequency_hz() const noexcept { return pending_hz_; }
  double window_seconds() const noexcept { return window_seconds_; }
  std::uint64_t windows_polled() const noexcept { return window_index_; }

  void set_frequency(double hz);
  FoldedProfile poll_window();
  virtual void stop() {}
  // True once a finite source (replay) has emitted everything.
  virtual bool finished() const { return false; }

 protected:
  void open_now();
  virtual void on_open(double /*hz*/) {}
  virtual FoldedProfile collect(std::uint64_t window_index, double hz) = 0;

  ProfileMeta meta_;

 private:
  KernelKind kind_;
  double pending_hz_;
  double window_hz_ = 0.0;
  double window_seconds_;
  bool open_ = false;
  std::uint64_t window_index_ = 0;
};

// Throws BadConfig for unusable configurations (missing template, bad
// replay file, invalid workload).
std::unique_ptr<Kernel> kernel_start(KernelKind kind, const KernelConfig& config, double frequency_hz);

}  // namespace atys
