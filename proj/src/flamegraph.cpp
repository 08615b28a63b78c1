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

#include "atys/flamegraph.hpp"

#include <cstdio>
#include <utility>

#include "atys/error.hpp"

namespace atys {

namespace {

template <typename Frames>
void insert_path(FlameNode& root, const Frames& frames, std::uint64_t count) {
  FlameNode* node = &root;
  node->total_value += count;
  for (const auto& frame : frames) {
    auto it = node->children.find(frame);
    if (it == node->children.end()) {
      std::string name(frame);
      it = node->children.try_emplace(name).first;
      it->second.name = std::move(name);
    }
    node = &it->second;
    node->total_value += count;
  }
  node->self_value += count;
}

void merge_node(FlameNode& dst, const FlameNode& src) {
  dst.self_value += src.self_value;
  dst.total_value += src.total_value;
  for (const auto& [name, child] : src.children) {
    auto it = dst.children.find(name);
    if (it == dst.children.end()) {
      dst.children.emplace(name, child);
    } else {
      merge_node(it->second, child);
    }
  }
}

bool node_ok(const FlameNode& n) {
  std::uint64_t sum = n.self_value;
  for (const auto& [name, child] : n.children) {
    if (name != child.name || !node_ok(child)) return false;
    sum += child.total_value;
  }
  return sum == n.total_value;
}

std::size_t count_nodes(const FlameNode& n) {
  std::size_t c = 1;
  for (const auto& [name, child] : n.children) c += count_nodes(child);
  return c;
}

void append_json_string(std::string& out, std::string_view s) {
  out += '"';
  for (char ch : s) {
    auto c = static_cast<unsigned char>(ch);
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += ch;
        }
    }
  }
  out += '"';
}

void emit_json_node(std::string& out, const FlameNode& n) {
  out += "{\"name\":";
  append_json_string(out, n.name);
  out += ",\"value\":";
  out += std::to_string(n.total_value);
  out += ",\"children\":[";
  bool first = true;
  for (const auto& [name, child] : n.children) {
    if (!first) out += ',';
    first = false;
    emit_json_node(out, child);
  }
  out += "]}";
}

void emit_folded_node(std::string& out, std::string& prefix, const FlameNode& n) {
  const std::size_t mark = prefix.size();
  if (!prefix.empty()) prefix += ';';
  prefix += n.name;
  if (n.self_value > 0) {
    out += prefix;
    out += ' ';
    out += std::to_string(n.self_value);
    out += '\n';
  }
  for (const auto& [name, child] : n.children) emit_folded_node(out, prefix, child);
  prefix.resize(mark);
}

}  // namespace

Flamegraph::Flamegraph() { root_.name = "root"; }

Flamegraph Flamegraph::build(const FoldedProfile& profile, bool thread_aware) {
  Flamegraph g;
  g.meta_.service = profile.meta().service;
  g.meta_.window_index = profile.meta().window_index;
  g.meta_.frequencies_hz.push_back(profile.meta().frequency_hz);
  std::vector<std::string_view> path;
  for (const auto& r : profile.records()) {
    path.clear();
    if (thread_aware) path.push_back(r.thread);
    for (const auto& f : r.frames) path.push_back(f);
    insert_path(g.root_, path, r.count);
  }
  return g;
}

void Flamegraph::add_path(std::span<const std::string> frames, std::uint64_t count) {
  insert_path(root_, frames, count);
}

void Flamegraph::add_path(std::span<const std::string_view> frames, std::uint64_t count) {
  insert_path(root_, frames, count);
}

void Flamegraph::merge_from(const Flamegraph& other) {
  merge_node(root_, other.root_);
  meta_.instances_merged += other.meta_.instances_merged;
  if (meta_.service.empty()) meta_.service = other.meta_.service;
  meta_.window_index = std::max(meta_.window_index, other.meta_.window_index);
  meta_.frequencies_hz.insert(meta_.frequencies_hz.end(), other.meta_.frequencies_hz.begin(),
                              other.meta_.frequencies_hz.end());
}

std::size_t Flamegraph::node_count() const { return count_nodes(root_); }

std::uint64_t Flamegraph::self_value_at(std::span<const std::string> frames) const {
  const FlameNode* node = &root_;
  for (const auto& f : frames) {
    auto it = node->children.find(f);
    if (it == node->children.end()) return 0;
    node = &it->second;
  }
  return node->self_value;
}

bool Flamegraph::check_invariants() const {
  return root_.name == "root" && root_.self_value == 0 && node_ok(root_);
}

Flamegraph merge(const Flamegraph& a, const Flamegraph& b) {
  Flamegraph out = a;
  out.merge_from(b);
  return out;
}

Flamegraph merge_all(std::span<const Flamegraph> graphs) {
  if (graphs.empty()) throw Error(ErrorCode::kEmptyInput, "merge_all needs at least one flamegraph");
  Flamegraph out = graphs.front();
  for (std::size_t i = 1; i < graphs.size(); ++i) out.merge_from(graphs[i]);
  return out;
}

Flamegraph hierarchical_aggregate(std::span<const Flamegraph> graphs, std::size_t group_size,
                                  HierarchyStats* stats) {
  if (graphs.empty()) {
    throw Error(ErrorCode::kEmptyInput, "hierarchical_aggregate needs at least one flamegraph");
  }
  if (group_size < 2) throw Error(ErrorCode::kInvalidArgument, "group_size must be at least 2");
  if (stats) stats->aggregations_per_round.clear();

  std::vector<Flamegraph> level(graphs.begin(), graphs.end());
  while (level.size() > 1) {
    std::vector<Flamegraph> next;
    next.reserve((level.size() + group_size - 1) / group_size);
    for (std::size_t i = 0; i < level.size(); i += group_size) {
      std::size_t end = std::min(level.size(), i + group_size);
      Flamegraph acc = std::move(level[i]);
      for (std::size_t j = i + 1; j < end; ++j) acc.merge_from(level[j]);
      next.push_back(std::move(acc));
    }
    if (stats) stats->aggregations_per_round.push_back(next.size());
    level = std::move(next);
  }
  return std::move(level.front());
}

StreamingAggregator::StreamingAggregator(std::size_t group_size) : group_size_(group_size) {
  if (group_size == 1) throw Error(ErrorCode::kInvalidArgument, "group_size must be 0 or at least 2");
}

void StreamingAggregator::add(const Flamegraph& graph) {
  ++added_;
  push(0, graph);
}

void StreamingAggregator::push(std::size_t level, const Flamegraph& graph) {
  if (levels_.size() <= level) levels_.resize(level + 1);
  Level& l = levels_[level];
  if (l.acc) {
    l.acc->merge_from(graph);
  } else {
    l.acc = graph;
  }
  ++l.members;
  if (group_size_ != 0 && l.members == group_size_) close_group(level);
}

void StreamingAggregator::push(std::size_t level, Flamegraph&& graph) {
  if (levels_.size() <= level) levels_.resize(level + 1);
  Level& l = levels_[level];
  if (l.acc) {
    l.acc->merge_from(graph);
  } else {
    l.acc = std::move(graph);
  }
  ++l.members;
  if (group_size_ != 0 && l.members == group_size_) close_group(level);
}

void StreamingAggregator::close_group(std::size_t level) {
  if (stats_.aggregations_per_round.size() <= level) stats_.aggregations_per_round.resize(level + 1, 0);
  ++stats_.aggregations_per_round[level];
  Flamegraph g = std::move(*levels_[level].acc);
  levels_[level].acc.reset();
  levels_[level].members = 0;
  push(level + 1, std::move(g));
}

Flamegraph StreamingAggregator::finish() {
  if (added_ == 0) throw Error(ErrorCode::kEmptyInput, "no flamegraphs were added");
  if (group_size_ == 0) {
    if (added_ > 1) stats_.aggregations_per_round = {1};
    Flamegraph out = std::move(*levels_[0].acc);
    levels_.clear();
    added_ = 0;
    return out;
  }
  // Items that ever reached each level: n, ceil(n/g), ... ; a level with a
  // single arrival is the result.
  std::size_t arrivals = added_;
  std::size_t level = 0;
  while (arrivals > 1) {
    if (levels_[level].members > 0) close_group(level);
    arrivals = (arrivals + group_size_ - 1) / group_size_;
    ++level;
  }
  Flamegraph out = std::move(*levels_[level].acc);
  levels_.clear();
  added_ = 0;
  return out;
}

std::string emit_json(const Flamegraph& graph) {
  std::string out;
  emit_json_node(out, graph.root());
  return out;
}

std::string emit_folded(const Flamegraph& graph) {
  std::string out;
  std::string prefix;
  for (const auto& [name, child] : graph.root().children) emit_folded_node(out, prefix, child);
  return out;
}

Flamegraph flamegraph_from_folded(std::string_view text) {
  Flamegraph g;
  scan_folded(text, [&](std::span<const std::string_view> frames, std::uint64_t count) {
    g.add_path(frames, count);
  });
  return g;
}

}  // namespace atys
