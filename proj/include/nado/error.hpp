// Copyright 2026 The nado Authors.
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

#ifndef NADO_ERROR_HPP_
#define NADO_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace nado {

// Numeric values of the first three match the CLI exit codes.
enum class ErrorCode : int {
  kConfig = 2,
  kCapacity = 3,
  kInfeasible = 4,
  kDomain = 10,
  kLength = 11,
  kDeadEnd = 12,
  kContract = 13,
  kFingerprint = 14,
  kBijection = 15,
  kIo = 16,
  kNumeric = 17,
  kInternal = 18,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace nado

#endif  // NADO_ERROR_HPP_
