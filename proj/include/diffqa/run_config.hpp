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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace diffqa {

/// Key=value settings with a fixed key set. Values start at their defaults and are
/// overridden by a config file, then by command-line assignments.
class RunConfig {
 public:
  explicit RunConfig(std::map<std::string, std::string> defaults) : values_(std::move(defaults)) {}

  /// Throws ContractError for keys outside the default set.
  void set(const std::string& key, const std::string& value);
  /// Parses `key=value` lines; `#` starts a comment. Throws ParseError with the line number.
  void merge_text(const std::string& text, const std::string& source);
  void merge_file(const std::filesystem::path& path);
  void merge_assignment(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& str(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::uint64_t seed(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  /// Comma- or space-separated list.
  std::vector<std::string> list(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;

  /// Sorted `key=value` lines; feeding the result back through merge_text reproduces the config.
  std::string echo() const;
  void write_echo(const std::filesystem::path& path) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace diffqa
