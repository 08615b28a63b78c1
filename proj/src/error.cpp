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

#include "atys/error.hpp"

namespace atys {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kNonPositiveFrequency: return "NonPositiveFrequency";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kEmptyProfile: return "EmptyProfile";
    case ErrorCode::kNegativeShare: return "NegativeShare";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kDomainViolation: return "DomainViolation";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kNonMonotoneModel: return "NonMonotoneModel";
    case ErrorCode::kKernelExited: return "KernelExited";
    case ErrorCode::kMalformedKernelOutput: return "MalformedKernelOutput";
    case ErrorCode::kBadConfig: return "BadConfig";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kUnknownTask: return "UnknownTask";
    case ErrorCode::kDuplicateTaskId: return "DuplicateTaskId";
    case ErrorCode::kInvalidState: return "InvalidState";
    case ErrorCode::kUnauthorized: return "Unauthorized";
    case ErrorCode::kBadRequest: return "BadRequest";
    case ErrorCode::kConnectionFailed: return "ConnectionFailed";
    case ErrorCode::kNoData: return "NoData";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

MalformedLine::MalformedLine(std::size_t line_no, const std::string& reason)
    : Error(ErrorCode::kMalformedLine,
            "line " + std::to_string(line_no) + ": " + reason),
      line_no_(line_no) {}

ConfigError::ConfigError(std::string field_path, const std::string& reason)
    : Error(ErrorCode::kConfigError, field_path + ": " + reason),
      field_path_(std::move(field_path)),
      reason_(reason) {}

}  // namespace atys
