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
#include <string>
#include <vector>

#include "atys/profile.hpp"

namespace atys {

inline constexpr double kDefaultPrunePercentile = 99.0;

struct ThreadSamples {
  std::string thread;
  std::uint64_t samples = 0;

  friend bool operator==(const ThreadSamples&, const ThreadSamples&) = default;
};

// Samples descending, ties by thread name ascending.
struct ThreadRanking {
  std::vector<ThreadSamples> entries;
  std::uint64_t total_samples = 0;
};

struct PruneReport {
  double coverage_percentile = 100.0;
  std::size_t retained_threads = 0;
  std::size_t discarded_threads = 0;
  double retained_sample_share = 1.0;
};

struct PruneResult {
  FoldedProfile profile;
  PruneReport report;
};

ThreadRanking rank_threads(const FoldedProfile& profile);

// Keeps the minimal ranking prefix whose cumulative share reaches
// percentile/100. Throws EmptyProfile and InvalidArgument (percentile
// outside (0, 100]).
PruneResult prune(const FoldedProfile& profile, double percentile);

// Mean absolute percentage error of self-time shares over the reference's
// top-n functions; functions missing from `pruned` count as share 0.
// Throws EmptyProfile when the reference has no samples.
double mape_top_n(const FunctionTotals& reference, const FunctionTotals& pruned, std::size_t n);
double mape_top_n(const FoldedProfile& reference, const FoldedProfile& pruned, std::size_t n);

}  // namespace atys
