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

#include "atys/profile.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "atys/error.hpp"

namespace atys {

namespace {

bool record_key_less(const TraceRecord& a, const TraceRecord& b) {
  if (a.thread != b.thread) return a.thread < b.thread;
  return a.frames < b.frames;
}

bool same_key(const TraceRecord& a, const TraceRecord& b) {
  return a.thread == b.thread && a.frames == b.frames;
}

std::string_view trim_right(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

}  // namespace

bool is_valid_frame_name(std::string_view name) noexcept {
  if (name.empty()) return false;
  return name.find_first_of(";\n") == std::string_view::npos;
}

FoldedProfile FoldedProfile::from_records(std::vector<TraceRecord> records,
                                          ProfileMeta meta) {
  for (const auto& r : records) {
    if (!is_valid_frame_name(r.thread)) {
      throw Error(ErrorCode::kInvalidArgument, "invalid thread identifier '" + r.thread + "'");
    }
    if (r.frames.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "trace record without frames");
    }
    for (const auto& f : r.frames) {
      if (!is_valid_frame_name(f)) {
        throw Error(ErrorCode::kInvalidArgument, "invalid frame name '" + f + "'");
      }
    }
  }
  std::erase_if(records, [](const TraceRecord& r) { return r.count == 0; });
  std::sort(records.begin(), records.end(), record_key_less);

  FoldedProfile out;
  out.meta_ = std::move(meta);
  out.records_.reserve(records.size());
  for (auto& r : records) {
    out.total_ += r.count;
    if (!out.records_.empty() && same_key(out.records_.back(), r)) {
      out.records_.back().count += r.count;
    } else {
      out.records_.push_back(std::move(r));
    }
  }
  return out;
}

void scan_folded(std::string_view text,
                 const std::function<void(std::span<const std::string_view>, std::uint64_t)>& visit) {
  std::vector<std::string_view> frames;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (is_blank(line)) continue;

    line = trim_right(line);
    std::size_t sep = line.find_last_of(" \t");
    if (sep == std::string_view::npos) throw MalformedLine(line_no, "missing count");
    std::string_view count_text = line.substr(sep + 1);
    std::string_view stack = trim_right(line.substr(0, sep));

    std::uint64_t count = 0;
    auto [ptr, ec] = std::from_chars(count_text.data(), count_text.data() + count_text.size(), count);
    if (ec != std::errc() || ptr != count_text.data() + count_text.size()) {
      throw MalformedLine(line_no, "non-integer count '" + std::string(count_text) + "'");
    }
    if (count == 0) throw MalformedLine(line_no, "zero count");

    frames.clear();
    std::size_t fpos = 0;
    while (true) {
      std::size_t semi = stack.find(';', fpos);
      std::string_view frame =
          stack.substr(fpos, semi == std::string_view::npos ? std::string_view::npos : semi - fpos);
      if (frame.empty()) throw MalformedLine(line_no, "empty frame");
      frames.push_back(frame);
      if (semi == std::string_view::npos) break;
      fpos = semi + 1;
    }
    try {
      visit(frames, count);
    } catch (const MalformedLine&) {
      throw;
    } catch (const Error& e) {
      throw MalformedLine(line_no, e.what());
    }
  }
}

FoldedProfile parse_folded(std::string_view text, const FoldedFormat& format,
                           ProfileMeta meta) {
  std::vector<TraceRecord> records;
  const bool leading_thread = format.thread_mode == ThreadMode::kLeadingFrame;
  scan_folded(text, [&](std::span<const std::string_view> frames, std::uint64_t count) {
    if (leading_thread && frames.size() < 2) {
      throw Error(ErrorCode::kInvalidArgument, "thread without frames");
    }
    TraceRecord rec;
    rec.count = count;
    auto first = frames.begin();
    if (leading_thread) {
      rec.thread = std::string(*first);
      ++first;
    } else {
      rec.thread = format.default_thread;
    }
    rec.frames.assign(first, frames.end());
    records.push_back(std::move(rec));
  });
  return FoldedProfile::from_records(std::move(records), std::move(meta));
}

std::string serialize_folded(const FoldedProfile& profile, const FoldedFormat& format) {
  std::string out;
  for (const auto& r : profile.records()) {
    if (format.thread_mode == ThreadMode::kLeadingFrame) {
      out += r.thread;
      out += ';';
    }
    for (std::size_t i = 0; i < r.frames.size(); ++i) {
      if (i) out += ';';
      out += r.frames[i];
    }
    out += ' ';
    out += std::to_string(r.count);
    out += '\n';
  }
  return out;
}

std::uint64_t FunctionTotals::total_self() const noexcept {
  std::uint64_t sum = 0;
  for (const auto& [name, c] : entries) sum += c.self_samples;
  return sum;
}

FunctionTotals function_totals(const FoldedProfile& profile) {
  FunctionTotals totals;
  std::set<std::string_view> seen;
  for (const auto& r : profile.records()) {
    totals.entries[r.frames.back()].self_samples += r.count;
    seen.clear();
    for (const auto& f : r.frames) {
      if (seen.insert(f).second) {
        auto it = totals.entries.find(f);
        if (it == totals.entries.end()) it = totals.entries.emplace(f, FunctionCounts{}).first;
        it->second.inclusive_samples += r.count;
      }
    }
  }
  return totals;
}

double cpu_time_seconds(std::uint64_t samples, double frequency_hz) {
  if (!(frequency_hz > 0.0)) {
    throw Error(ErrorCode::kNonPositiveFrequency, "sampling frequency must be positive");
  }
  return static_cast<double>(samples) / frequency_hz;
}

std::vector<RankedFunction> top_functions(const FunctionTotals& totals, std::size_t n) {
  std::vector<RankedFunction> ranked;
  ranked.reserve(totals.entries.size());
  for (const auto& [name, c] : totals.entries) {
    if (c.self_samples > 0) ranked.push_back({name, c.self_samples});
  }
  auto by_rank = [](const RankedFunction& a, const RankedFunction& b) {
    if (a.self_samples != b.self_samples) return a.self_samples > b.self_samples;
    return a.name < b.name;
  };
  if (ranked.size() > n) {
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(), by_rank);
    ranked.resize(n);
  } else {
    std::sort(ranked.begin(), ranked.end(), by_rank);
  }
  return ranked;
}

HotspotDistribution hotspot_distribution(const FunctionTotals& totals, std::size_t k,
                                         std::uint64_t window_index) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be positive");
  HotspotDistribution dist;
  dist.k = k;
  dist.window_index = window_index;
  auto top = top_functions(totals, k);
  std::uint64_t sum = 0;
  for (const auto& f : top) sum += f.self_samples;
  if (sum == 0) return dist;
  for (const auto& f : top) {
    dist.shares.emplace(f.name, static_cast<double>(f.self_samples) / static_cast<double>(sum));
  }
  return dist;
}

}  // namespace atys
