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

#include "diffqa/tensor_table.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "diffqa/errors.hpp"

namespace diffqa {

namespace {

constexpr std::uint8_t kF32 = 1;
constexpr std::uint8_t kF64 = 2;

template <typename U>
void put_le(std::string& out, U v) {
  static_assert(std::is_integral_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename F>
void put_float_le(std::string& out, F v) {
  using U = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
  put_le(out, std::bit_cast<U>(v));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }

  template <typename F>
  F get_float(const char* what) {
    using U = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
    return std::bit_cast<F>(get<U>(what));
  }

  std::string get_bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw ParseError(source_, pos_, std::string("truncated while reading ") + what);
  }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const { throw ParseError(source_, at, msg); }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

void TensorTable::put(const std::string& name, TensorF t) {
  if (auto it = index_.find(name); it != index_.end()) {
    entries_[it->second] = std::move(t);
    return;
  }
  index_.emplace(name, names_.size());
  names_.push_back(name);
  entries_.emplace_back(std::move(t));
}

void TensorTable::put(const std::string& name, TensorD t) {
  if (auto it = index_.find(name); it != index_.end()) {
    entries_[it->second] = std::move(t);
    return;
  }
  index_.emplace(name, names_.size());
  names_.push_back(name);
  entries_.emplace_back(std::move(t));
}

void TensorTable::put_params(const std::string& prefix, const ParameterSet<float>& params) {
  for (const auto& n : params.names()) put(prefix + n, params.get(n));
}

const TensorTable::Entry& TensorTable::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("tensor table has no entry '" + name + "'");
  return entries_[it->second];
}

const TensorF& TensorTable::f32(const std::string& name) const {
  const auto* p = std::get_if<TensorF>(&at(name));
  if (!p) throw ContractError("tensor table entry '" + name + "' is not float32");
  return *p;
}

const TensorD& TensorTable::f64(const std::string& name) const {
  const auto* p = std::get_if<TensorD>(&at(name));
  if (!p) throw ContractError("tensor table entry '" + name + "' is not float64");
  return *p;
}

ParameterSet<float> TensorTable::params(const std::string& prefix) const {
  ParameterSet<float> out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].rfind(prefix, 0) != 0) continue;
    const auto* p = std::get_if<TensorF>(&entries_[i]);
    if (!p) throw ContractError("parameter '" + names_[i] + "' is not float32");
    out.add(names_[i].substr(prefix.size()), *p);
  }
  return out;
}

std::string TensorTable::serialize() const {
  std::string out(kMagic, 8);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(names_.size()));
  for (std::size_t i = 0; i < names_.size(); ++i) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(names_[i].size()));
    out += names_[i];
    std::visit(
        [&](const auto& t) {
          using T = typename std::decay_t<decltype(t)>::value_type;
          out.push_back(static_cast<char>(sizeof(T) == 4 ? kF32 : kF64));
          put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
          for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
          for (T v : t.data()) put_float_le(out, v);
        },
        entries_[i]);
  }
  std::string echo;
  for (const auto& [k, v] : config_) echo += k + "=" + v + "\n";
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(echo.size()));
  out += echo;
  return out;
}

TensorTable TensorTable::deserialize(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  if (r.get_bytes(8, "magic") != std::string(kMagic, 8)) r.fail("bad magic; not a tensor table", 0);
  const std::size_t vpos = r.pos();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version), vpos);
  const auto count = r.get<std::uint32_t>("entry count");
  TensorTable table;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name = r.get_bytes(name_len, "name");
    const std::size_t dpos = r.pos();
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != kF32 && dtype != kF64) r.fail("unknown dtype tag " + std::to_string(dtype), dpos);
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank == 0 || rank > 8) r.fail("invalid rank " + std::to_string(rank), dpos + 1);
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      const std::size_t at = r.pos();
      d = static_cast<std::size_t>(r.get<std::uint64_t>("dimension"));
      if (d == 0 || d > (std::size_t{1} << 32)) r.fail("invalid dimension", at);
      numel *= d;
    }
    r.need(numel * (dtype == kF32 ? 4 : 8), "payload");
    if (table.contains(name)) r.fail("duplicate entry '" + name + "'", dpos);
    if (dtype == kF32) {
      std::vector<float> v(numel);
      for (auto& x : v) x = r.get_float<float>("payload");
      table.put(name, TensorF(std::move(shape), std::move(v)));
    } else {
      std::vector<double> v(numel);
      for (auto& x : v) x = r.get_float<double>("payload");
      table.put(name, TensorD(std::move(shape), std::move(v)));
    }
  }
  const auto echo_len = r.get<std::uint32_t>("config length");
  const std::size_t echo_pos = r.pos();
  const std::string echo = r.get_bytes(echo_len, "config");
  std::size_t start = 0;
  while (start < echo.size()) {
    const std::size_t nl = echo.find('\n', start);
    const std::string line = echo.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) r.fail("config echo line without '='", echo_pos + start);
    table.config_[line.substr(0, eq)] = line.substr(eq + 1);
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  if (!r.done()) r.fail("trailing bytes after config echo", r.pos());
  return table;
}

void TensorTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TensorTable TensorTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes, path.string());
}

}  // namespace diffqa
