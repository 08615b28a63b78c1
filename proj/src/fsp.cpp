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

#include "atys/fsp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "atys/error.hpp"

namespace atys {

ThreadRanking rank_threads(const FoldedProfile& profile) {
  ThreadRanking ranking;
  // Records are sorted by thread, so equal threads are adjacent.
  for (const auto& r : profile.records()) {
    if (ranking.entries.empty() || ranking.entries.back().thread != r.thread) {
      ranking.entries.push_back({r.thread, 0});
    }
    ranking.entries.back().samples += r.count;
    ranking.total_samples += r.count;
  }
  std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                   [](const ThreadSamples& a, const ThreadSamples& b) { return a.samples > b.samples; });
  return ranking;
}

PruneResult prune(const FoldedProfile& profile, double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw Error(ErrorCode::kInvalidArgument, "coverage percentile must be in (0, 100]");
  }
  if (profile.total_samples() == 0) throw Error(ErrorCode::kEmptyProfile, "cannot prune an empty profile");

  const ThreadRanking ranking = rank_threads(profile);
  const double total = static_cast<double>(ranking.total_samples);
  const double target = percentile * total;

  std::size_t keep = ranking.entries.size();
  if (percentile < 100.0) {
    std::uint64_t cumulative = 0;
    for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
      cumulative += ranking.entries[i].samples;
      if (static_cast<double>(cumulative) * 100.0 >= target) {
        keep = i + 1;
        break;
      }
    }
  }

  PruneResult result;
  result.report.coverage_percentile = percentile;
  result.report.retained_threads = keep;
  result.report.discarded_threads = ranking.entries.size() - keep;

  if (keep == ranking.entries.size()) {
    result.profile = profile;
    result.report.retained_sample_share = 1.0;
    return result;
  }

  std::unordered_set<std::string_view> retained;
  retained.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) retained.insert(ranking.entries[i].thread);

  std::vector<TraceRecord> kept;
  std::uint64_t kept_samples = 0;
  for (const auto& r : profile.records()) {
    if (retained.contains(r.thread)) {
      kept.push_back(r);
      kept_samples += r.count;
    }
  }
  result.profile = FoldedProfile::from_records(std::move(kept), profile.meta());
  result.report.retained_sample_share = static_cast<double>(kept_samples) / total;
  return result;
}

double mape_top_n(const FunctionTotals& reference, const FunctionTotals& pruned, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "n must be positive");
  const std::uint64_t ref_total = reference.total_self();
  if (ref_total == 0) throw Error(ErrorCode::kEmptyProfile, "reference profile has no samples");
  const std::uint64_t pruned_total = pruned.total_self();

  const auto top = top_functions(reference, n);
  double sum = 0.0;
  for (const auto& f : top) {
    const double r = static_cast<double>(f.self_samples) / static_cast<double>(ref_total);
    double q = 0.0;
    if (pruned_total > 0) {
      auto it = pruned.entries.find(f.name);
      if (it != pruned.entries.end()) {
        q = static_cast<double>(it->second.self_samples) / static_cast<double>(pruned_total);
      }
    }
    sum += std::abs(r - q) / r;
  }
  return 100.0 * sum / static_cast<double>(top.size());
}

double mape_top_n(const FoldedProfile& reference, const FoldedProfile& pruned, std::size_t n) {
  return mape_top_n(function_totals(reference), function_totals(pruned), n);
}

}  // namespace atys
