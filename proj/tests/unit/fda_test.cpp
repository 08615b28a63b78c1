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

#include <cmath>
#include <random>

#include "atys/error.hpp"
#include "atys/fda.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace atys;

namespace {

HotspotDistribution dist(std::map<std::string, double, std::less<>> shares) {
  HotspotDistribution d;
  d.shares = std::move(shares);
  return d;
}

FdaConfig paper_config() {
  FdaConfig c;
  c.theta = 0.5;
  c.lambda = 0.8;
  c.stable_windows_required = 5;
  c.f_min_hz = 10;
  c.f_max_hz = 10000;
  return c;
}

}  // namespace

TEST_CASE("js_divergence: examples") {
  const auto p = dist({{"a", 0.5}, {"b", 0.5}});
  CHECK(js_divergence(p, p) == 0.0);
  CHECK(js_divergence(dist({{"a", 1.0}}), dist({{"b", 1.0}})) == doctest::Approx(1.0).epsilon(1e-12));
  const double expected = 0.5 * (0.5 * std::log2(0.5 / 0.75) + 0.5 * std::log2(0.5 / 0.25)) +
                          0.5 * (1.0 * std::log2(1.0 / 0.75));
  CHECK(js_divergence(p, dist({{"a", 1.0}})) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(js_divergence(p, dist({{"a", 1.0}})) == doctest::Approx(0.31127812445913283).epsilon(1e-12));
}

TEST_CASE("js_divergence: empty inputs, renormalization and bad shares") {
  CHECK(js_divergence(dist({}), dist({})) == 0.0);
  CHECK(js_divergence(dist({{"a", 1.0}}), dist({})) == 1.0);
  CHECK(js_divergence(dist({}), dist({{"a", 1.0}})) == 1.0);
  CHECK(js_divergence(dist({{"a", 2.0}, {"b", 2.0}}), dist({{"a", 0.5}, {"b", 0.5}})) == 0.0);
  CHECK_THROWS_AS(js_divergence(dist({{"a", -0.1}}), dist({{"a", 1.0}})), Error);
}

TEST_CASE("js_divergence: agrees with the direct formula, symmetric and bounded") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 10);
  for (int i = 0; i < 500; ++i) {
    std::map<std::string, double, std::less<>> p;
    std::map<std::string, double, std::less<>> q;
    std::map<std::string, double> po;
    std::map<std::string, double> qo;
    for (int j = size(rng); j > 0; --j) {
      const std::string k = "f" + std::to_string(static_cast<int>(u(rng) * 15));
      const double v = u(rng) + 1e-3;
      p[k] = v;
      po[k] = v;
    }
    for (int j = size(rng); j > 0; --j) {
      const std::string k = "f" + std::to_string(static_cast<int>(u(rng) * 15));
      const double v = u(rng) + 1e-3;
      q[k] = v;
      qo[k] = v;
    }
    const double d = js_divergence(dist(p), dist(q));
    CHECK(std::abs(d - testing::js_direct(po, qo)) < 1e-12);
    CHECK(std::abs(d - js_divergence(dist(q), dist(p))) < 1e-12);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("advance_frequency: raise, decay and clamp") {
  const auto cfg = paper_config();
  auto s = FrequencyState::initial(1000, cfg);
  auto step = advance_frequency(s, 0.6, cfg);
  CHECK(step.next_frequency_hz == doctest::Approx(1250));
  CHECK(step.raised);
  CHECK(step.state.stable_count == 0);

  for (int w = 1; w <= 6; ++w) {
    step = advance_frequency(s, 0.0, cfg);
    s = step.state;
    if (w < 6) {
      CHECK(s.frequency_hz == 1000);
      CHECK_FALSE(step.decayed);
    }
  }
  CHECK(step.decayed);
  CHECK(s.frequency_hz == doctest::Approx(800));
  CHECK(s.stable_count == 0);

  const auto top = FrequencyState::initial(cfg.f_max_hz, cfg);
  CHECK(advance_frequency(top, 0.9, cfg).next_frequency_hz == cfg.f_max_hz);

  // D equal to theta counts as stable.
  CHECK(advance_frequency(s, 0.5, cfg).state.stable_count == 1);
}

TEST_CASE("advance_frequency: first window counts towards the stable streak") {
  const auto cfg = paper_config();
  auto step = advance_frequency(FrequencyState::initial(1000, cfg), std::nullopt, cfg);
  CHECK_FALSE(step.divergence.has_value());
  CHECK(step.state.stable_count == 1);
  CHECK(step.next_frequency_hz == 1000);
}

TEST_CASE("advance_frequency: matches the oracle on scripted traces") {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trace = 0; trace < 50; ++trace) {
    FdaConfig cfg = paper_config();
    cfg.theta = 0.05 + 0.9 * u(rng);
    cfg.lambda = 0.05 + 0.9 * u(rng);
    cfg.stable_windows_required = 1 + static_cast<std::uint32_t>(u(rng) * 8);
    std::vector<std::optional<double>> ds{std::nullopt};
    for (int i = 1; i < 200; ++i) ds.push_back(u(rng) < 0.15 ? 0.5 + 0.5 * u(rng) : 0.3 * u(rng));
    const double f0 = 10 + u(rng) * 9990;
    const auto expected = testing::fda_oracle(ds, f0, cfg.theta, cfg.lambda, cfg.stable_windows_required,
                                              cfg.f_min_hz, cfg.f_max_hz);
    auto s = FrequencyState::initial(f0, cfg);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      s = advance_frequency(s, ds[i], cfg).state;
      REQUIRE(s.frequency_hz == expected[i]);
    }
  }
}

TEST_CASE("advance_frequency: a stable run decays from f_max to f_min within the bound") {
  const auto cfg = paper_config();
  // ceil(log(f_min/f_max)/log(lambda)) decays, each after N+1 stable windows.
  const int decays = static_cast<int>(std::ceil(std::log(cfg.f_min_hz / cfg.f_max_hz) / std::log(cfg.lambda)));
  const int bound = decays * static_cast<int>(cfg.stable_windows_required + 1);
  CHECK(bound == 186);
  auto s = FrequencyState::initial(cfg.f_max_hz, cfg);
  int reached = -1;
  for (int w = 1; w <= bound + 20; ++w) {
    s = advance_frequency(s, 0.0, cfg).state;
    if (reached < 0 && s.frequency_hz == cfg.f_min_hz) reached = w;
    CHECK(s.frequency_hz >= cfg.f_min_hz);
  }
  CHECK(reached == bound);
}

TEST_CASE("next_frequency: uses the previous window as reference") {
  const auto cfg = paper_config();
  auto s = FrequencyState::initial(1000, cfg);
  auto step = next_frequency(s, dist({{"a", 1.0}}), cfg);
  CHECK_FALSE(step.divergence.has_value());
  REQUIRE(step.state.last_distribution.has_value());
  step = next_frequency(step.state, dist({{"b", 1.0}}), cfg);
  REQUIRE(step.divergence.has_value());
  CHECK(*step.divergence == doctest::Approx(1.0));
  CHECK(step.next_frequency_hz == doctest::Approx(1250));
  CHECK(step.state.last_distribution->shares.count("b") == 1);
}

TEST_CASE("FdaConfig: validation") {
  auto cfg = paper_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.theta = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = paper_config();
  cfg.lambda = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = paper_config();
  cfg.f_min_hz = cfg.f_max_hz;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = paper_config();
  cfg.stable_windows_required = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK(paper_config().clamp(5) == 10);
  CHECK(paper_config().clamp(1e9) == 10000);
}

TEST_CASE("HotspotReference: pools until a shift is reported") {
  HotspotReference ref(10);
  FunctionTotals w1;
  w1.entries["a"] = {30, 30};
  w1.entries["b"] = {10, 10};
  FunctionTotals w2;
  w2.entries["a"] = {3, 3};
  w2.entries["b"] = {1, 1};
  ref.observe(w1, false);
  ref.observe(w2, false);
  CHECK(ref.pooled_samples() == 44);
  CHECK(ref.estimate().shares.at("a") == doctest::Approx(0.75));
  FunctionTotals w3;
  w3.entries["c"] = {5, 5};
  ref.observe(w3, true);
  CHECK(ref.pooled_samples() == 5);
  CHECK(ref.estimate().shares.size() == 1);
}
