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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atys/profile.hpp"

namespace atys {

// Invariant: total_value == self_value + sum of children's total_value.
struct FlameNode {
  std::string name;
  std::uint64_t self_value = 0;
  std::uint64_t total_value = 0;
  std::map<std::string, FlameNode, std::less<>> children;
};

struct FlameMeta {
  std::string service;
  std::uint64_t instances_merged = 1;
  std::uint64_t window_index = 0;
  // Sampling frequencies of the merged inputs; counts are merged raw.
  std::vector<double> frequencies_hz;
};

class Flamegraph {
 public:
  Flamegraph();

  // Inserts every record's path under the root; the thread identifier is
  // prepended as a frame when thread_aware is set.
  static Flamegraph build(const FoldedProfile& profile, bool thread_aware);

  void add_path(std::span<const std::string> frames, std::uint64_t count);
  void add_path(std::span<const std::string_view> frames, std::uint64_t count);

  // Recursive union by child name; matched nodes add their values.
  void merge_from(const Flamegraph& other);

  const FlameNode& root() const noexcept { return root_; }
  const FlameMeta& meta() const noexcept { return meta_; }
  FlameMeta& meta() noexcept { return meta_; }

  std::uint64_t total() const noexcept { return root_.total_value; }
  std::size_t node_count() const;

  // Self value of the node at the given path, 0 when absent.
  std::uint64_t self_value_at(std::span<const std::string> frames) const;

  // Verifies the total/self invariant on every node.
  bool check_invariants() const;

 private:
  FlameNode root_;
  FlameMeta meta_;
};

Flamegraph merge(const Flamegraph& a, const Flamegraph& b);

// Left fold of merge. Throws EmptyInput.
Flamegraph merge_all(std::span<const Flamegraph> graphs);

struct HierarchyStats {
  // Number of group aggregations performed in each reduction round.
  std::vector<std::size_t> aggregations_per_round;

  std::size_t rounds() const noexcept { return aggregations_per_round.size(); }
};

// Repeatedly merges consecutive groups of group_size graphs until one
// remains. Emission-identical to merge_all. Throws EmptyInput and
// InvalidArgument (group_size < 2).
Flamegraph hierarchical_aggregate(std::span<const Flamegraph> graphs, std::size_t group_size,
                                  HierarchyStats* stats = nullptr);

// Incremental form of hierarchical_aggregate (or merge_all when group_size
// is 0): keeps one partial accumulator per level, so memory stays bounded
// by the depth of the hierarchy rather than the number of inputs.
class StreamingAggregator {
 public:
  explicit StreamingAggregator(std::size_t group_size = 0);

  void add(const Flamegraph& graph);
  std::size_t added() const noexcept { return added_; }

  // Throws EmptyInput when nothing was added.
  Flamegraph finish();
  const HierarchyStats& stats() const noexcept { return stats_; }

 private:
  struct Level {
    std::optional<Flamegraph> acc;
    std::size_t members = 0;
  };
  void push(std::size_t level, Flamegraph&& graph);
  void push(std::size_t level, const Flamegraph& graph);
  void close_group(std::size_t level);

  std::size_t group_size_;
  std::size_t added_ = 0;
  std::vector<Level> levels_;
  HierarchyStats stats_;
};

// {"name":..,"value":total,"children":[..]} with children sorted by name.
std::string emit_json(const Flamegraph& graph);

// One line per node with a non-zero self value, root omitted, in
// depth-first name order.
std::string emit_folded(const Flamegraph& graph);

// Parses folded text straight into a tree.
Flamegraph flamegraph_from_folded(std::string_view text);

}  // namespace atys
