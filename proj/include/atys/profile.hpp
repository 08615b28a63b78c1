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

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace atys {

inline constexpr std::string_view kDefaultThread = "all";

// One unique (thread, call path) with its sample count. Frames are
// root-first; the last frame is the on-CPU function.
struct TraceRecord {
  std::string thread;
  std::vector<std::string> frames;
  std::uint64_t count = 0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct ProfileMeta {
  std::string service;
  std::string instance;
  double frequency_hz = 1.0;
  double window_seconds = 1.0;
  std::uint64_t window_index = 0;
};

// Canonical set of counted stack traces for one window: records sorted by
// (thread, frames) with no duplicate keys and every count >= 1.
class FoldedProfile {
 public:
  FoldedProfile() = default;

  // Validates frame names, sums duplicate keys, drops zero counts and sorts.
  static FoldedProfile from_records(std::vector<TraceRecord> records,
                                    ProfileMeta meta = {});

  const std::vector<TraceRecord>& records() const noexcept { return records_; }
  const ProfileMeta& meta() const noexcept { return meta_; }
  void set_meta(ProfileMeta meta) { meta_ = std::move(meta); }

  std::uint64_t total_samples() const noexcept { return total_; }
  bool empty() const noexcept { return records_.empty(); }

  // Meta is excluded from equality.
  friend bool operator==(const FoldedProfile& a, const FoldedProfile& b) {
    return a.records_ == b.records_;
  }

 private:
  std::vector<TraceRecord> records_;
  ProfileMeta meta_;
  std::uint64_t total_ = 0;
};

enum class ThreadMode {
  kNone,          // every line belongs to the default thread
  kLeadingFrame,  // the first frame of each line names the thread
};

struct FoldedFormat {
  ThreadMode thread_mode = ThreadMode::kNone;
  std::string default_thread = std::string(kDefaultThread);
};

// True when the name can be used as a frame or thread identifier.
bool is_valid_frame_name(std::string_view name) noexcept;

// Tokenizes folded text without building records: calls visit(frames, count)
// for every non-blank line, frames being views into `text`. Throws
// MalformedLine.
void scan_folded(std::string_view text,
                 const std::function<void(std::span<const std::string_view>, std::uint64_t)>& visit);

// Parses `[<thread>;]<frame>(;<frame>)* <count>` lines. Blank lines are
// skipped. Throws MalformedLine.
FoldedProfile parse_folded(std::string_view text, const FoldedFormat& format = {},
                           ProfileMeta meta = {});

// Inverse of parse_folded for the same format. With ThreadMode::kNone the
// thread column is dropped.
std::string serialize_folded(const FoldedProfile& profile,
                             const FoldedFormat& format = {});

struct FunctionCounts {
  std::uint64_t self_samples = 0;
  std::uint64_t inclusive_samples = 0;

  friend bool operator==(const FunctionCounts&, const FunctionCounts&) = default;
};

struct FunctionTotals {
  std::map<std::string, FunctionCounts, std::less<>> entries;

  std::uint64_t total_self() const noexcept;
};

// Self samples are attributed to the leaf frame; inclusive samples count a
// record once for every distinct function on its path.
FunctionTotals function_totals(const FoldedProfile& profile);

// samples / frequency_hz. Throws NonPositiveFrequency.
double cpu_time_seconds(std::uint64_t samples, double frequency_hz);

// Normalized self-time shares over the top-k functions.
struct HotspotDistribution {
  std::map<std::string, double, std::less<>> shares;
  std::size_t k = 10;
  std::uint64_t window_index = 0;

  bool empty() const noexcept { return shares.empty(); }
};

struct RankedFunction {
  std::string name;
  std::uint64_t self_samples = 0;
};

// Functions with non-zero self samples ordered by self samples descending,
// then name ascending; at most n entries.
std::vector<RankedFunction> top_functions(const FunctionTotals& totals, std::size_t n);

HotspotDistribution hotspot_distribution(const FunctionTotals& totals, std::size_t k,
                                         std::uint64_t window_index = 0);

}  // namespace atys
