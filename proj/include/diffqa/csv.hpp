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

#include <filesystem>
#include <string>
#include <vector>

namespace diffqa {

/// Comma-separated table with a header row. Fields are unquoted and may not contain commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  /// Index of `name` in the header; throws ParseError when absent.
  std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);

/// Writes header and rows with LF line endings; rejects fields containing ',' or newlines.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
std::string format_csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

/// `%.{digits}g` formatting.
std::string format_real(double v, int digits = 9);
double parse_real(const std::string& field, const std::string& source, std::size_t line);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace diffqa
