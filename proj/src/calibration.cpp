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

#include "atys/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "atys/error.hpp"

namespace atys {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(std::span<const CurvePoint> points) {
  for (const auto& pt : points) {
    if (!std::isfinite(pt.p) || !std::isfinite(pt.y)) {
      throw Error(ErrorCode::kInvalidArgument, "calibration points must be finite");
    }
  }
}

std::size_t distinct_p(std::span<const CurvePoint> points) {
  std::set<double> ps;
  for (const auto& pt : points) ps.insert(pt.p);
  return ps.size();
}

// Least squares fit y = offset + scale * x.
struct AffineFit {
  double offset = 0.0;
  double scale = 0.0;
  double sse = kInf;
};

AffineFit affine_fit(std::span<const double> x, std::span<const CurvePoint> points) {
  const double n = static_cast<double>(points.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    mx += x[i];
    my += points[i].y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (points[i].y - my);
  }
  AffineFit fit;
  fit.scale = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.offset = my - fit.scale * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double r = points[i].y - (fit.offset + fit.scale * x[i]);
    sse += r * r;
  }
  fit.sse = sse;
  return fit;
}

// ln(b p + c) reparameterized as ln|c| + ln(sign + r p) with r = b/|c|.
struct RatioFamily {
  double sign = 1.0;  // sign of c
  double lo = -kInf;  // open bounds on r keeping every argument positive
  double hi = kInf;

  bool valid(double r) const { return r > lo && r < hi; }
};

RatioFamily make_family(double sign, std::span<const CurvePoint> points) {
  RatioFamily fam;
  fam.sign = sign;
  double p_min = kInf;
  double p_max = -kInf;
  for (const auto& pt : points) {
    p_min = std::min(p_min, pt.p);
    p_max = std::max(p_max, pt.p);
  }
  if (sign > 0) {
    // 1 + r p > 0 for all p.
    if (p_max > 0) fam.lo = -1.0 / p_max;
    if (p_min < 0) fam.hi = -1.0 / p_min;
  } else {
    // r p - 1 > 0 for all p; requires every p > 0.
    fam.lo = p_min > 0 ? 1.0 / p_min : kInf;
  }
  return fam;
}

AffineFit ratio_fit(const RatioFamily& fam, double r, std::span<const CurvePoint> points,
                    std::vector<double>& scratch) {
  scratch.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double arg = fam.sign + r * points[i].p;
    if (!(arg > 0.0)) return {};
    scratch[i] = std::log(arg);
  }
  return affine_fit(scratch, points);
}

std::optional<LogModel> model_from_ratio(const RatioFamily& fam, double r, const AffineFit& fit) {
  if (fit.scale == 0.0) return std::nullopt;
  const double abs_c = std::exp(fit.offset / fit.scale);
  if (!std::isfinite(abs_c) || abs_c <= 0.0) return std::nullopt;
  LogModel m;
  m.a = fit.scale;
  m.c = fam.sign * abs_c;
  m.b = r * abs_c;
  return m;
}

double golden_min(const auto& f, double lo, double hi) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  for (int iter = 0; iter < 300 && (hi - lo) > 1e-15 * std::max(1.0, std::abs(lo) + std::abs(hi)); ++iter) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? x1 : x2;
}

}  // namespace

double LogModel::operator()(double p) const noexcept { return a * std::log(b * p + c); }

template <typename Model>
double fit_mape(const Model& model, std::span<const CurvePoint> points) {
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& pt : points) {
    if (pt.y == 0.0) continue;
    sum += std::abs((pt.y - model(pt.p)) / pt.y);
    ++used;
  }
  return used ? 100.0 * sum / static_cast<double>(used) : 0.0;
}

template double fit_mape<LinearModel>(const LinearModel&, std::span<const CurvePoint>);
template double fit_mape<LogModel>(const LogModel&, std::span<const CurvePoint>);

double sum_squared_error(const LogModel& model, std::span<const CurvePoint> points) {
  double sse = 0.0;
  for (const auto& pt : points) {
    if (!model.defined_at(pt.p)) return kInf;
    const double r = pt.y - model(pt.p);
    sse += r * r;
  }
  return sse;
}

LinearModel fit_linear(std::span<const CurvePoint> points) {
  require_finite(points);
  if (points.size() < 2 || distinct_p(points) < 2) {
    throw Error(ErrorCode::kDegenerateInput, "linear fit needs at least two distinct p values");
  }
  std::vector<double> x(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) x[i] = points[i].p;
  const AffineFit fit = affine_fit(x, points);
  LinearModel m;
  m.slope = fit.scale;
  m.intercept = fit.offset;
  m.fit_mape = fit_mape(m, points);
  return m;
}

LogModel fit_log(std::span<const CurvePoint> points) {
  require_finite(points);
  if (points.size() < 3) throw Error(ErrorCode::kDegenerateInput, "log fit needs at least three points");
  if (distinct_p(points) < 2) throw Error(ErrorCode::kDegenerateInput, "log fit needs distinct p values");
  for (const auto& pt : points) {
    if (pt.y < 0.0) throw Error(ErrorCode::kInvalidArgument, "log fit expects y >= 0");
  }

  const bool flat = std::all_of(points.begin(), points.end(),
                                [&](const CurvePoint& pt) { return pt.y == points.front().y; });
  if (flat) {
    // b -> 0: a * ln(e) reproduces the constant exactly.
    LogModel m;
    m.a = points.front().y;
    m.b = 0.0;
    m.c = std::exp(1.0);
    m.fit_mape = fit_mape(m, points);
    return m;
  }

  // Stage 1: grid over b in [-0.01, 0.01] and c above the positivity bound.
  constexpr int kBSteps = 200;
  constexpr int kCSteps = 60;
  LogModel best;
  double best_sse = kInf;
  std::vector<double> x(points.size());
  for (int bi = 0; bi <= kBSteps; ++bi) {
    const double b = -0.01 + 0.02 * bi / kBSteps;
    double c_floor = -kInf;
    for (const auto& pt : points) c_floor = std::max(c_floor, -b * pt.p);
    for (int ci = 0; ci <= kCSteps; ++ci) {
      const double c = c_floor + std::pow(10.0, -3.0 + 6.0 * ci / kCSteps);
      double sxx = 0.0;
      double sxy = 0.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        x[i] = std::log(b * points[i].p + c);
        sxx += x[i] * x[i];
        sxy += x[i] * points[i].y;
      }
      if (!(sxx > 0.0) || !std::isfinite(sxx)) continue;
      LogModel m{sxy / sxx, b, c, 0.0};
      const double sse = sum_squared_error(m, points);
      if (sse < best_sse) {
        best_sse = sse;
        best = m;
      }
    }
  }
  if (!std::isfinite(best_sse)) {
    throw Error(ErrorCode::kDomainViolation, "no (b, c) keeps b*p + c positive over the data");
  }

  // Stage 2: refine the curvature ratio b/|c| around the best cell; the
  // offset a*ln|c| and the scale a are re-solved exactly for every ratio.
  if (best.c != 0.0) {
    const RatioFamily fam = make_family(best.c > 0 ? 1.0 : -1.0, points);
    const double r0 = best.b / std::abs(best.c);
    std::vector<double> scratch;
    auto sse_at = [&](double r) {
      return fam.valid(r) ? ratio_fit(fam, r, points, scratch).sse : kInf;
    };
    double step = std::max(1e-4 / std::abs(best.c), std::abs(r0) * 0.05);
    double lo = r0 - step;
    double hi = r0 + step;
    double r_best = r0;
    for (int expand = 0; expand < 60; ++expand) {
      const double clo = fam.valid(lo) ? lo : (std::isfinite(fam.lo) ? fam.lo + 1e-12 * std::max(1.0, std::abs(fam.lo)) : lo);
      const double chi = fam.valid(hi) ? hi : (std::isfinite(fam.hi) ? fam.hi - 1e-12 * std::max(1.0, std::abs(fam.hi)) : hi);
      r_best = golden_min(sse_at, clo, chi);
      const double margin = 1e-6 * (chi - clo);
      const bool at_lo = r_best - clo < margin && fam.valid(clo - step);
      const bool at_hi = chi - r_best < margin && fam.valid(chi + step);
      if (!at_lo && !at_hi) break;
      step *= 2.0;
      lo = r_best - step;
      hi = r_best + step;
    }
    const AffineFit fit = ratio_fit(fam, r_best, points, scratch);
    if (auto m = model_from_ratio(fam, r_best, fit)) {
      const double sse = sum_squared_error(*m, points);
      if (sse <= best_sse) {
        best = *m;
        best_sse = sse;
      }
    }
  }
  best.fit_mape = fit_mape(best, points);
  return best;
}

double solve_min_p(const LogModel& model, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::kInvalidArgument, "epsilon must be a positive percentage");
  }
  if (!model.defined_at(kMinPercentile) || !model.defined_at(100.0)) {
    throw Error(ErrorCode::kDomainViolation, "model is undefined somewhere on (0, 100]");
  }
  constexpr int kGrid = 1000;
  double prev = model(kMinPercentile);
  for (int i = 1; i <= kGrid; ++i) {
    const double p = 100.0 * i / kGrid;
    const double v = model(p);
    if (!std::isfinite(v) || v > prev + 1e-9 * std::max(1.0, std::abs(prev))) {
      throw Error(ErrorCode::kNonMonotoneModel, "MAPE model increases with p near p=" + std::to_string(p));
    }
    prev = v;
  }
  const double at_max = model(100.0);
  if (at_max > epsilon) {
    std::ostringstream msg;
    msg << "MAPE(100) = " << at_max << " exceeds epsilon = " << epsilon;
    throw InfeasibleTarget(at_max, msg.str());
  }
  if (model(kMinPercentile) <= epsilon) return kMinPercentile;
  double lo = kMinPercentile;  // model(lo) > epsilon
  double hi = 100.0;           // model(hi) <= epsilon
  while (hi - lo > 1e-7) {
    const double mid = 0.5 * (lo + hi);
    if (model(mid) <= epsilon) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace atys
