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
#include <stdexcept>
#include <string>
#include <string_view>

namespace atys {

enum class ErrorCode {
  kMalformedLine,
  kNonPositiveFrequency,
  kInvalidArgument,
  kEmptyInput,
  kEmptyProfile,
  kNegativeShare,
  kDegenerateInput,
  kDomainViolation,
  kInfeasible,
  kNonMonotoneModel,
  kKernelExited,
  kMalformedKernelOutput,
  kBadConfig,
  kConfigError,
  kUnknownTask,
  kDuplicateTaskId,
  kInvalidState,
  kUnauthorized,
  kBadRequest,
  kConnectionFailed,
  kNoData,
  kIo,
};

// Stable wire name, e.g. "UnknownTask".
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// A folded-format line failed to parse. Line numbers are 1-based.
class MalformedLine : public Error {
 public:
  MalformedLine(std::size_t line_no, const std::string& reason);

  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

// Invalid configuration; field_path is a dotted/indexed path such as
// "targets[1].instance_id".
class ConfigError : public Error {
 public:
  ConfigError(std::string field_path, const std::string& reason);

  const std::string& field_path() const noexcept { return field_path_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string field_path_;
  std::string reason_;
};

}  // namespace atys
