// Copyright 2026 The Syfer Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace syfer {

// Broad failure classes. The C API and the CLI map these onto exit codes:
// Config/Dimension/Size/Parameter -> 2, Data/Format/Domain/Insufficient -> 3.
enum class ErrorKind {
  Config,        // bad configuration value, unknown field, shape mismatch at setup
  Dimension,     // tensor shapes do not conform
  Parameter,     // invalid numeric parameter (e.g. negative scale)
  Size,          // instance too large for an exact algorithm
  Domain,        // value outside its domain (label id, empty match set, ...)
  Data,          // missing or unusable input artifact
  Format,        // malformed container / file
  Insufficient,  // not enough samples to satisfy a precondition
  Numeric,       // non-finite value where finite required
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void check(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace syfer
