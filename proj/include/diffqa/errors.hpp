// Copyright 2026 The diffqa Authors.
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

namespace diffqa {

/// Violated precondition (argument out of range, empty input, degenerate data).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operand shapes incompatible for the named operation.
class ShapeError : public ContractError {
 public:
  ShapeError(const std::string& op, const std::string& detail)
      : ContractError(op + ": shape mismatch: " + detail), op_(op) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// NaN or Inf encountered where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `position` is a byte offset or a 1-based line number
/// depending on the format (see the `what()` text).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t position, const std::string& detail,
             bool is_line = false)
      : std::runtime_error(source + (is_line ? ": line " : ": byte ") + std::to_string(position) +
                           ": " + detail),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

#define DIFFQA_REQUIRE(cond, msg)                  \
  do {                                             \
    if (!(cond)) throw ::diffqa::ContractError(msg); \
  } while (0)

}  // namespace diffqa
