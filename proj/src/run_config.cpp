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

#include "diffqa/run_config.hpp"

#include <cerrno>
#include <cstdlib>
#include <sstream>

#include "diffqa/csv.hpp"
#include "diffqa/errors.hpp"

namespace diffqa {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ContractError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::merge_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, no, "expected key=value", true);
    const std::string key = trim(line.substr(0, eq));
    if (!has(key)) throw ParseError(source, no, "unknown config key '" + key + "'", true);
    values_[key] = trim(line.substr(eq + 1));
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) { merge_text(read_file(path), path.string()); }

void RunConfig::merge_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ContractError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ContractError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::integer(const std::string& key) const {
  const std::string& s = str(key);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw ContractError("config '" + key + "': not an integer: '" + s + "'");
  }
  return v;
}

std::uint64_t RunConfig::seed(const std::string& key) const {
  const std::string& s = str(key);
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || s[0] == '-' || end != s.c_str() + s.size() || errno == ERANGE) {
    throw ContractError("config '" + key + "': not a seed: '" + s + "'");
  }
  return v;
}

double RunConfig::real(const std::string& key) const {
  const std::string& s = str(key);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw ContractError("config '" + key + "': not a number: '" + s + "'");
  }
  return v;
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& s = str(key);
  if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "off" || s == "no") return false;
  throw ContractError("config '" + key + "': not a boolean: '" + s + "'");
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
  std::string s = str(key);
  for (char& c : s) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string item; in >> item;) out.push_back(item);
  return out;
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : list(key)) out.push_back(parse_real(item, "config '" + key + "'", 1));
  return out;
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

void RunConfig::write_echo(const std::filesystem::path& path) const { write_file(path, echo()); }

}  // namespace diffqa
