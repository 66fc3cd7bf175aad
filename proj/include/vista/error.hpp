// Copyright 2026 The VISTA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VISTA_ERROR_HPP_
#define VISTA_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace vista {

// Error categories. The CLI maps these 1:1 onto process exit codes, so the
// numbering is part of the external contract (see include/vista.h).
enum class ErrorKind {
  kCheck = 1,     // a numeric check failed (gradcheck, diagnose)
  kParse = 2,     // config / model-file / checkpoint syntax error
  kDiverged = 3,  // training produced a non-finite value
  kBudget = 4,    // enumeration budget exceeded
  kMismatch = 5,  // checkpoint inconsistent with its own config
  kOversize = 6,  // model too large for the requested operation
  kInvalid = 7,   // contract violation (bad shape, bad argument, ...)
  kIo = 8,        // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace vista

#endif  // VISTA_ERROR_HPP_
