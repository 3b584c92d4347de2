// Copyright 2026 The AVSepChain Authors.
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

#include <stdexcept>
#include <string>

namespace avsep {

enum class ErrorKind {
  kInvalidArgument,
  kInvalidState,
  kFormat,
  kNumeric,
  kDegenerate,
  kIo,
  kIncompatible,
  kConfig,
};

/// Base class of every exception thrown by the library. The kind maps
/// one-to-one onto the CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& w) : Error(ErrorKind::kInvalidArgument, w) {}
};
struct InvalidState : Error {
  explicit InvalidState(const std::string& w) : Error(ErrorKind::kInvalidState, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorKind::kFormat, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::kNumeric, w) {}
};
/// Zero-power target or input where a ratio would be undefined.
struct DegenerateInput : Error {
  explicit DegenerateInput(const std::string& w) : Error(ErrorKind::kDegenerate, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::kIo, w) {}
};
struct IncompatibleError : Error {
  explicit IncompatibleError(const std::string& w) : Error(ErrorKind::kIncompatible, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};

#define AVSEP_REQUIRE(cond, ExcType, msg) \
  do {                                    \
    if (!(cond)) throw ExcType(msg);      \
  } while (0)

}  // namespace avsep
