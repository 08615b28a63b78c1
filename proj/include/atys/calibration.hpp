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

#include <span>
#include <string>
#include <vector>

#include "atys/error.hpp"

namespace atys {

struct CalibrationSample {
  double p = 0.0;                 // retention percentile
  double aggregation_time = 0.0;  // seconds
  double mape = 0.0;              // percent
};

struct CurvePoint {
  double p = 0.0;
  double y = 0.0;
};

// y = slope * p + intercept
struct LinearModel {
  double slope = 0.0;
  double intercept = 0.0;
  double fit_mape = 0.0;

  double operator()(double p) const noexcept { return slope * p + intercept; }
};

// y = a * ln(b * p + c)
struct LogModel {
  double a = 0.0;
  double b = 0.0;
  double c = 1.0;
  double fit_mape = 0.0;

  double operator()(double p) const noexcept;
  bool defined_at(double p) const noexcept { return b * p + c > 0.0; }
};

// Mean absolute percentage error of a model over the points; points with
// y == 0 are skipped.
template <typename Model>
double fit_mape(const Model& model, std::span<const CurvePoint> points);

double sum_squared_error(const LogModel& model, std::span<const CurvePoint> points);

// Ordinary least squares. Throws DegenerateInput when fewer than two
// distinct p values are given.
LinearModel fit_linear(std::span<const CurvePoint> points);

// Coarse grid over (b, c) with `a` solved in closed form per cell, then a
// one-dimensional bracketed refinement of the curvature ratio b/c with the
// offset and scale re-solved by linear least squares. Throws
// DegenerateInput and DomainViolation.
LogModel fit_log(std::span<const CurvePoint> points);

inline constexpr double kMinPercentile = 1e-6;

// No retention percentile meets the target; carries model(100).
class InfeasibleTarget : public Error {
 public:
  InfeasibleTarget(double mape_at_max, const std::string& message)
      : Error(ErrorCode::kInfeasible, message), mape_at_max_(mape_at_max) {}

  double mape_at_max() const noexcept { return mape_at_max_; }

 private:
  double mape_at_max_;
};

// Smallest p in (0, 100] with model(p) <= epsilon, found by bisection to
// 1e-6. Throws InvalidArgument, DomainViolation, NonMonotoneModel and
// Infeasible.
double solve_min_p(const LogModel& model, double epsilon);

}  // namespace atys
