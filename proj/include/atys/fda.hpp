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
#include <cstdint>
#include <optional>

#include "atys/profile.hpp"

namespace atys {

struct FdaConfig {
  double theta = 0.5;   // divergence threshold, (0,1)
  double lambda = 0.8;  // decay coefficient, (0,1)
  std::uint32_t stable_windows_required = 5;
  std::size_t k = 10;
  double f_min_hz = 10.0;
  double f_max_hz = 10000.0;

  // Throws InvalidArgument naming the offending field.
  void validate() const;
  double clamp(double hz) const noexcept;
};

struct FrequencyState {
  double frequency_hz = 100.0;
  std::uint32_t stable_count = 0;
  std::optional<HotspotDistribution> last_distribution;

  static FrequencyState initial(double frequency_hz, const FdaConfig& config);
};

// Jensen-Shannon divergence in bits over the union of both supports
// (missing functions are zero, each side renormalized). Two empty inputs
// give 0, exactly one empty input gives 1. Throws NegativeShare.
double js_divergence(const HotspotDistribution& p, const HotspotDistribution& q);

struct FdaStep {
  FrequencyState state;
  double next_frequency_hz = 0.0;
  // Absent on the first window, where no previous distribution exists.
  std::optional<double> divergence;
  bool raised = false;
  bool decayed = false;
};

// One transition of the controller driven by an already computed
// divergence; nullopt is the first-window bootstrap (treated as 0).
// `state.last_distribution` is left untouched.
FdaStep advance_frequency(const FrequencyState& state, std::optional<double> divergence,
                          const FdaConfig& config);

// Divergence against the previous window's distribution, then
// advance_frequency; the current distribution becomes the new reference.
FdaStep next_frequency(const FrequencyState& state, const HotspotDistribution& current,
                       const FdaConfig& config);

// Pooled self-time estimate since the last detected hotspot shift. While
// windows stay similar, samples taken at a higher frequency keep standing
// in for later low-frequency windows; a shift restarts the pool.
class HotspotReference {
 public:
  explicit HotspotReference(std::size_t k = 10) : k_(k) {}

  void observe(const FunctionTotals& window_totals, bool shift_detected);
  HotspotDistribution estimate() const;
  std::uint64_t pooled_samples() const noexcept { return pooled_.total_self(); }

 private:
  std::size_t k_;
  FunctionTotals pooled_;
};

}  // namespace atys
