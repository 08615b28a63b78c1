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

#include "atys/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "atys/error.hpp"

namespace atys {

namespace {

double subtree_weight(const CallNode& node, const std::map<std::string, double>& overrides) {
  auto it = overrides.find(node.name);
  double w = it == overrides.end() ? node.self_weight : it->second;
  for (const auto& child : node.children) w += subtree_weight(child, overrides);
  return w;
}

void validate_node(const CallNode& node, const std::string& path) {
  if (!is_valid_frame_name(node.name)) {
    throw Error(ErrorCode::kInvalidArgument, path + ": invalid function name '" + node.name + "'");
  }
  if (!(node.self_weight >= 0.0) || !std::isfinite(node.self_weight)) {
    throw Error(ErrorCode::kInvalidArgument, path + ": weights must be non-negative");
  }
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    validate_node(node.children[i], path + ".children[" + std::to_string(i) + "]");
  }
}

void flatten(const CallNode& node, const std::map<std::string, double>& overrides,
             std::vector<std::string>& stack, std::vector<std::vector<std::string>>& paths,
             std::vector<double>& weights) {
  stack.push_back(node.name);
  auto it = overrides.find(node.name);
  const double self = it == overrides.end() ? node.self_weight : it->second;
  if (self > 0.0) {
    paths.push_back(stack);
    weights.push_back(self);
  }
  for (const auto& child : node.children) flatten(child, overrides, stack, paths, weights);
  stack.pop_back();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void SyntheticWorkloadConfig::validate() const {
  if (thread_count == 0) throw Error(ErrorCode::kInvalidArgument, "thread_count must be positive");
  if (!(zipf_exponent > 0.0) || !std::isfinite(zipf_exponent)) {
    throw Error(ErrorCode::kInvalidArgument, "zipf_exponent must be positive");
  }
  validate_node(call_tree, "call_tree");
  std::vector<WorkloadPhase> effective = phases;
  if (effective.empty()) effective.push_back({});
  for (std::size_t i = 0; i < effective.size(); ++i) {
    const auto& ph = effective[i];
    if (ph.duration_windows == 0) {
      throw Error(ErrorCode::kInvalidArgument, "phases[" + std::to_string(i) + "].duration_windows must be positive");
    }
    for (const auto& [name, w] : ph.leaf_weight_overrides) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw Error(ErrorCode::kInvalidArgument, "phases[" + std::to_string(i) + "] override for " + name + " must be non-negative");
      }
    }
    if (!(subtree_weight(call_tree, ph.leaf_weight_overrides) > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "phases[" + std::to_string(i) + "]: call tree has zero total weight");
    }
  }
}

std::size_t sample_cdf(const std::vector<double>& cdf, double u) {
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) return cdf.size() - 1;
  return static_cast<std::size_t>(it - cdf.begin());
}

SyntheticWorkload::SyntheticWorkload(SyntheticWorkloadConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.phases.empty()) config_.phases.push_back({});

  cycle_windows_ = 0;
  for (const auto& ph : config_.phases) {
    cycle_windows_ += ph.duration_windows;
    Phase phase;
    std::vector<double> weights;
    std::vector<std::string> stack;
    flatten(config_.call_tree, ph.leaf_weight_overrides, stack, phase.paths, weights);
    double total = 0.0;
    for (double w : weights) total += w;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      phase.cdf.push_back(acc / total);
      phase.truth[phase.paths[i].back()] += weights[i] / total;
    }
    phase.cdf.back() = 1.0;
    phases_.push_back(std::move(phase));
  }

  const std::uint32_t n = config_.thread_count;
  thread_pmf_.resize(n);
  double norm = 0.0;
  for (std::uint32_t k = 0; k < n; ++k) {
    thread_pmf_[k] = 1.0 / std::pow(static_cast<double>(k + 1), config_.zipf_exponent);
    norm += thread_pmf_[k];
  }
  double acc = 0.0;
  thread_cdf_.resize(n);
  for (std::uint32_t k = 0; k < n; ++k) {
    thread_pmf_[k] /= norm;
    acc += thread_pmf_[k];
    thread_cdf_[k] = acc;
  }
  thread_cdf_.back() = 1.0;

  const std::size_t width = std::to_string(n).size();
  thread_names_.reserve(n);
  for (std::uint32_t k = 1; k <= n; ++k) {
    std::string digits = std::to_string(k);
    thread_names_.push_back("thread-" + std::string(width - digits.size(), '0') + digits);
  }
}

std::size_t SyntheticWorkload::phase_at(std::uint64_t window_index) const {
  std::uint64_t t = window_index % cycle_windows_;
  for (std::size_t i = 0; i < config_.phases.size(); ++i) {
    if (t < config_.phases[i].duration_windows) return i;
    t -= config_.phases[i].duration_windows;
  }
  return config_.phases.size() - 1;
}

std::map<std::string, double> SyntheticWorkload::ground_truth_shares(std::uint64_t window_index) const {
  return phases_[phase_at(window_index)].truth;
}

FoldedProfile SyntheticWorkload::sample(std::uint64_t window_index, std::uint64_t samples,
                                        ProfileMeta meta) const {
  const Phase& phase = phases_[phase_at(window_index)];
  std::mt19937_64 rng(splitmix64(config_.seed ^ splitmix64(window_index)));
  const std::uint64_t n_paths = phase.paths.size();
  std::unordered_map<std::uint64_t, std::uint64_t> counts;
  for (std::uint64_t i = 0; i < samples; ++i) {
    const std::size_t path = sample_cdf(phase.cdf, unit_uniform(rng));
    const std::size_t thread = sample_cdf(thread_cdf_, unit_uniform(rng));
    ++counts[thread * n_paths + path];
  }
  std::vector<TraceRecord> records;
  records.reserve(counts.size());
  for (const auto& [key, count] : counts) {
    records.push_back({thread_names_[key / n_paths], phase.paths[key % n_paths], count});
  }
  return FoldedProfile::from_records(std::move(records), std::move(meta));
}

}  // namespace atys
