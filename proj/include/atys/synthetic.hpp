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
#include <map>
#include <random>
#include <string>
#include <vector>

#include "atys/profile.hpp"

namespace atys {

// A function in the synthetic call tree. A sample that reaches a node stops
// there with probability self_weight / (self_weight + subtree weight of the
// children), otherwise descends into a child chosen by subtree weight.
struct CallNode {
  std::string name;
  double self_weight = 0.0;
  std::vector<CallNode> children;
};

// Self weights of every node named in the override map are replaced for the
// duration of the phase.
struct WorkloadPhase {
  std::uint32_t duration_windows = 1;
  std::map<std::string, double> leaf_weight_overrides;
};

struct SyntheticWorkloadConfig {
  std::uint64_t seed = 1;
  std::uint32_t thread_count = 1;
  double zipf_exponent = 1.0;
  CallNode call_tree;
  std::vector<WorkloadPhase> phases;  // cycled; empty means one static phase

  void validate() const;
};

class SyntheticWorkload {
 public:
  explicit SyntheticWorkload(SyntheticWorkloadConfig config);

  const SyntheticWorkloadConfig& config() const noexcept { return config_; }

  std::size_t phase_count() const noexcept { return phases_.size(); }
  std::size_t phase_at(std::uint64_t window_index) const;

  // Expected self-time share of every function in the given window.
  std::map<std::string, double> ground_truth_shares(std::uint64_t window_index) const;

  // Zipf(s) probabilities over thread ranks 1..thread_count.
  const std::vector<double>& thread_probabilities() const noexcept { return thread_pmf_; }
  const std::string& thread_name(std::size_t rank0) const { return thread_names_.at(rank0); }

  // Draws `samples` stack samples for a window. The generator is seeded from
  // (seed, window_index), so the output depends only on those and the count.
  FoldedProfile sample(std::uint64_t window_index, std::uint64_t samples, ProfileMeta meta = {}) const;

 private:
  struct Phase {
    std::vector<std::vector<std::string>> paths;  // one per stop point
    std::vector<double> cdf;
    std::map<std::string, double> truth;
  };

  SyntheticWorkloadConfig config_;
  std::vector<Phase> phases_;
  std::uint64_t cycle_windows_ = 1;
  std::vector<double> thread_pmf_;
  std::vector<double> thread_cdf_;
  std::vector<std::string> thread_names_;
};

// Uniform double in [0, 1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Index of the first cdf entry strictly greater than u (cdf ends at 1).
std::size_t sample_cdf(const std::vector<double>& cdf, double u);

}  // namespace atys
