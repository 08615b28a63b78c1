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

#include "atys/fda.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "atys/error.hpp"

namespace atys {

void FdaConfig::validate() const {
  if (!(theta > 0.0 && theta < 1.0)) throw Error(ErrorCode::kInvalidArgument, "theta must be in (0,1)");
  if (!(lambda > 0.0 && lambda < 1.0)) throw Error(ErrorCode::kInvalidArgument, "lambda must be in (0,1)");
  if (stable_windows_required == 0) {
    throw Error(ErrorCode::kInvalidArgument, "stable_windows_required must be positive");
  }
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be positive");
  if (!(f_min_hz > 0.0)) throw Error(ErrorCode::kInvalidArgument, "f_min_hz must be positive");
  if (!(f_max_hz > f_min_hz) || !std::isfinite(f_max_hz)) {
    throw Error(ErrorCode::kInvalidArgument, "f_max_hz must be finite and greater than f_min_hz");
  }
}

double FdaConfig::clamp(double hz) const noexcept { return std::clamp(hz, f_min_hz, f_max_hz); }

FrequencyState FrequencyState::initial(double frequency_hz, const FdaConfig& config) {
  FrequencyState s;
  s.frequency_hz = config.clamp(frequency_hz);
  return s;
}

double js_divergence(const HotspotDistribution& p, const HotspotDistribution& q) {
  double p_sum = 0.0;
  double q_sum = 0.0;
  for (const auto& [name, v] : p.shares) {
    if (v < 0.0 || !std::isfinite(v)) throw Error(ErrorCode::kNegativeShare, "negative share for " + name);
    p_sum += v;
  }
  for (const auto& [name, v] : q.shares) {
    if (v < 0.0 || !std::isfinite(v)) throw Error(ErrorCode::kNegativeShare, "negative share for " + name);
    q_sum += v;
  }
  const bool p_empty = p_sum == 0.0;
  const bool q_empty = q_sum == 0.0;
  if (p_empty && q_empty) return 0.0;
  if (p_empty || q_empty) return 1.0;

  // Merge-walk the two name-sorted supports.
  double kl_pm = 0.0;
  double kl_qm = 0.0;
  auto term = [](double a, double m) { return a > 0.0 ? a * std::log2(a / m) : 0.0; };
  auto pi = p.shares.begin();
  auto qi = q.shares.begin();
  while (pi != p.shares.end() || qi != q.shares.end()) {
    double a = 0.0;
    double b = 0.0;
    if (qi == q.shares.end() || (pi != p.shares.end() && pi->first < qi->first)) {
      a = pi->second / p_sum;
      ++pi;
    } else if (pi == p.shares.end() || qi->first < pi->first) {
      b = qi->second / q_sum;
      ++qi;
    } else {
      a = pi->second / p_sum;
      b = qi->second / q_sum;
      ++pi;
      ++qi;
    }
    const double m = (a + b) / 2.0;
    kl_pm += term(a, m);
    kl_qm += term(b, m);
  }
  const double d = 0.5 * kl_pm + 0.5 * kl_qm;
  return std::clamp(d, 0.0, 1.0);
}

FdaStep advance_frequency(const FrequencyState& state, std::optional<double> divergence,
                          const FdaConfig& config) {
  FdaStep step;
  step.state = state;
  step.divergence = divergence;
  const double d = divergence.value_or(0.0);
  double f = state.frequency_hz;
  if (d > config.theta) {
    f = config.clamp(f / config.lambda);
    step.state.stable_count = 0;
    step.raised = true;
  } else {
    ++step.state.stable_count;
    if (step.state.stable_count > config.stable_windows_required) {
      f = config.clamp(f * config.lambda);
      step.state.stable_count = 0;
      step.decayed = true;
    }
  }
  step.state.frequency_hz = f;
  step.next_frequency_hz = f;
  return step;
}

FdaStep next_frequency(const FrequencyState& state, const HotspotDistribution& current,
                       const FdaConfig& config) {
  std::optional<double> d;
  if (state.last_distribution) d = js_divergence(*state.last_distribution, current);
  FdaStep step = advance_frequency(state, d, config);
  step.state.last_distribution = current;
  return step;
}

void HotspotReference::observe(const FunctionTotals& window_totals, bool shift_detected) {
  if (shift_detected) pooled_.entries.clear();
  for (const auto& [name, c] : window_totals.entries) {
    if (c.self_samples == 0) continue;
    auto it = pooled_.entries.find(name);
    if (it == pooled_.entries.end()) it = pooled_.entries.emplace(name, FunctionCounts{}).first;
    it->second.self_samples += c.self_samples;
    it->second.inclusive_samples += c.inclusive_samples;
  }
}

HotspotDistribution HotspotReference::estimate() const { return hotspot_distribution(pooled_, k_); }

}  // namespace atys
