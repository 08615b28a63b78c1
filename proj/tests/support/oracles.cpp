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

#include "oracles.hpp"

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace atys::testing {

std::vector<TraceRecord> random_records(std::mt19937_64& rng, std::size_t records, std::size_t threads,
                                        std::size_t max_depth, std::size_t alphabet) {
  std::uniform_int_distribution<std::size_t> thread_dist(0, threads - 1);
  std::uniform_int_distribution<std::size_t> depth_dist(1, max_depth);
  std::uniform_int_distribution<std::size_t> name_dist(0, alphabet - 1);
  std::uniform_int_distribution<std::uint64_t> count_dist(1, 1000);
  std::map<std::pair<std::string, Path>, std::uint64_t> unique;
  std::size_t attempts = 0;
  while (unique.size() < records && attempts++ < records * 20) {
    std::string thread = "T" + std::to_string(thread_dist(rng));
    Path frames;
    const std::size_t depth = depth_dist(rng);
    for (std::size_t d = 0; d < depth; ++d) frames.push_back("fn_" + std::to_string(name_dist(rng)));
    unique.emplace(std::make_pair(std::move(thread), std::move(frames)), count_dist(rng));
  }
  std::vector<TraceRecord> out;
  for (auto& [key, count] : unique) out.push_back(TraceRecord{key.first, key.second, count});
  return out;
}

std::map<Path, std::uint64_t> path_self_counts(const std::vector<TraceRecord>& records, bool thread_aware) {
  std::map<Path, std::uint64_t> out;
  for (const auto& r : records) {
    Path p;
    if (thread_aware) p.push_back(r.thread);
    p.insert(p.end(), r.frames.begin(), r.frames.end());
    out[p] += r.count;
  }
  return out;
}

std::string folded_from_paths(const std::map<Path, std::uint64_t>& paths) {
  std::string out;
  for (const auto& [p, count] : paths) {
    if (count == 0) continue;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (i) out += ';';
      out += p[i];
    }
    out += ' ' + std::to_string(count) + '\n';
  }
  return out;
}

double js_direct(const std::map<std::string, double>& p_in, const std::map<std::string, double>& q_in) {
  double sp = 0.0;
  double sq = 0.0;
  for (const auto& [k, v] : p_in) sp += v;
  for (const auto& [k, v] : q_in) sq += v;
  std::set<std::string> keys;
  for (const auto& [k, v] : p_in) keys.insert(k);
  for (const auto& [k, v] : q_in) keys.insert(k);
  double kl_pm = 0.0;
  double kl_qm = 0.0;
  for (const auto& k : keys) {
    const double p = p_in.count(k) ? p_in.at(k) / sp : 0.0;
    const double q = q_in.count(k) ? q_in.at(k) / sq : 0.0;
    const double m = 0.5 * (p + q);
    if (p > 0) kl_pm += p * std::log(p / m);
    if (q > 0) kl_qm += q * std::log(q / m);
  }
  return 0.5 * (kl_pm + kl_qm) / std::log(2.0);
}

std::vector<double> fda_oracle(const std::vector<std::optional<double>>& divergences, double f0, double theta,
                               double lambda, std::uint32_t stable_required, double f_min, double f_max) {
  std::vector<double> out;
  double f = f0;
  std::uint32_t stable = 0;
  for (const auto& d : divergences) {
    const double value = d.value_or(0.0);
    if (value > theta) {
      f = std::min(f / lambda, f_max);
      stable = 0;
    } else {
      stable += 1;
      if (stable > stable_required) {
        f = std::max(f * lambda, f_min);
        stable = 0;
      }
    }
    out.push_back(f);
  }
  return out;
}

namespace {

bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == ':'; }
bool is_name_char(char c) { return is_name_start(c) || std::isdigit(static_cast<unsigned char>(c)); }

[[noreturn]] void bad(std::size_t line_no, const std::string& why) {
  throw std::runtime_error("line " + std::to_string(line_no) + ": " + why);
}

double parse_value(const std::string& s, std::size_t line_no) {
  if (s == "NaN") return std::nan("");
  if (s == "+Inf") return HUGE_VAL;
  if (s == "-Inf") return -HUGE_VAL;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) bad(line_no, "bad value '" + s + "'");
  return v;
}

std::string family_of(const std::string& sample, const std::map<std::string, ParsedFamily>& families) {
  if (families.count(sample)) return sample;
  for (const char* suffix : {"_total", "_sum", "_count", "_bucket"}) {
    const std::string suf(suffix);
    if (sample.size() > suf.size() && sample.compare(sample.size() - suf.size(), suf.size(), suf) == 0) {
      const std::string base = sample.substr(0, sample.size() - suf.size());
      if (families.count(base)) return base;
    }
  }
  return {};
}

}  // namespace

std::map<std::string, ParsedFamily> parse_exposition(std::string_view text) {
  std::map<std::string, ParsedFamily> families;
  std::set<std::string> typed;
  std::set<std::string> series;
  if (!text.empty() && text.back() != '\n') throw std::runtime_error("document must end with a newline");
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream in(line);
      std::string hash, kind, name;
      in >> hash >> kind >> name;
      if (kind != "HELP" && kind != "TYPE") continue;
      if (name.empty() || !is_name_start(name[0]) ||
          !std::all_of(name.begin(), name.end(), is_name_char)) {
        bad(line_no, "bad metric name in comment");
      }
      std::string rest;
      std::getline(in, rest);
      if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
      if (kind == "TYPE") {
        static const std::set<std::string> kinds{"counter", "gauge", "histogram", "summary", "untyped"};
        if (!kinds.count(rest)) bad(line_no, "unknown type '" + rest + "'");
        if (!typed.insert(name).second) bad(line_no, "duplicate TYPE for " + name);
        if (!families[name].samples.empty()) bad(line_no, "TYPE after samples for " + name);
        families[name].type = rest;
      } else {
        families[name].help = rest;
      }
      continue;
    }

    ParsedSample s;
    std::size_t i = 0;
    if (!is_name_start(line[0])) bad(line_no, "bad metric name");
    while (i < line.size() && is_name_char(line[i])) s.name += line[i++];
    std::string key = s.name + "{";
    if (i < line.size() && line[i] == '{') {
      ++i;
      while (i < line.size() && line[i] != '}') {
        std::string label;
        if (!is_name_start(line[i]) || line[i] == ':') bad(line_no, "bad label name");
        while (i < line.size() && (std::isalnum(static_cast<unsigned char>(line[i])) || line[i] == '_')) {
          label += line[i++];
        }
        if (i + 1 >= line.size() || line[i] != '=' || line[i + 1] != '"') bad(line_no, "expected =\"");
        i += 2;
        std::string value;
        for (;;) {
          if (i >= line.size()) bad(line_no, "unterminated label value");
          const char c = line[i++];
          if (c == '"') break;
          if (c == '\\') {
            if (i >= line.size()) bad(line_no, "dangling escape");
            const char e = line[i++];
            if (e == '\\') value += '\\';
            else if (e == '"') value += '"';
            else if (e == 'n') value += '\n';
            else bad(line_no, "invalid escape");
          } else {
            value += c;
          }
        }
        if (!s.labels.emplace(label, value).second) bad(line_no, "duplicate label " + label);
        if (i < line.size() && line[i] == ',') ++i;
        else if (i < line.size() && line[i] != '}') bad(line_no, "expected , or }");
      }
      if (i >= line.size()) bad(line_no, "unterminated label set");
      ++i;
    }
    if (i >= line.size() || line[i] != ' ') bad(line_no, "expected a space before the value");
    ++i;
    std::string value_text = line.substr(i);
    if (auto sp = value_text.find(' '); sp != std::string::npos) value_text.resize(sp);  // optional timestamp
    s.value = parse_value(value_text, line_no);

    const std::string family = family_of(s.name, families);
    if (family.empty() || !typed.count(family)) bad(line_no, "sample before TYPE for " + s.name);
    for (const auto& [k, v] : s.labels) key += k + "=" + v + ",";
    if (!series.insert(key).second) bad(line_no, "duplicate series " + key);
    families[family].samples.push_back(std::move(s));
  }
  return families;
}

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "atys-test-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace atys::testing
