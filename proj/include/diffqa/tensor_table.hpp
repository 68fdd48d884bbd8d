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
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "diffqa/autograd.hpp"
#include "diffqa/tensor.hpp"

namespace diffqa {

/// Ordered collection of named float/double tensors plus a key=value config
/// echo. This is the on-disk format for every checkpoint and for binary
/// embedding tables; see docs/tensor_table_format.md for the byte layout.
class TensorTable {
 public:
  using Entry = std::variant<TensorF, TensorD>;
  static constexpr char kMagic[9] = "DFQATBL\x01";
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, TensorF t);
  void put(const std::string& name, TensorD t);
  void put_params(const std::string& prefix, const ParameterSet<float>& params);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Entry& at(const std::string& name) const;
  const TensorF& f32(const std::string& name) const;
  const TensorD& f64(const std::string& name) const;
  /// Collects every entry under `prefix` (prefix stripped) into a ParameterSet.
  ParameterSet<float> params(const std::string& prefix) const;

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::map<std::string, std::string>& config() noexcept { return config_; }
  const std::map<std::string, std::string>& config() const noexcept { return config_; }

  std::string serialize() const;
  static TensorTable deserialize(const std::string& bytes, const std::string& source = "<memory>");

  void save(const std::filesystem::path& path) const;
  static TensorTable load(const std::filesystem::path& path);

 private:
  std::vector<std::string> names_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::string> config_;
};

}  // namespace diffqa
