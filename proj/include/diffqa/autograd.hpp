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
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "diffqa/tensor.hpp"

namespace diffqa {

/// Named tensor collection with stable insertion order.
template <typename T>
class ParameterSet {
 public:
  void add(const std::string& name, Tensor<T> value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& get(const std::string& name) const;
  Tensor<T>& get(const std::string& name);
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  std::size_t element_count() const;
  bool congruent(const ParameterSet& other) const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
using GradientMap = std::map<std::string, Tensor<T>>;

enum class Op {
  kLeaf, kAdd, kSub, kMul, kScale, kAddScalar, kMatmul, kTranspose, kConv2d, kUpsample2x,
  kRelu, kSilu, kSigmoid, kGroupNorm, kMean, kSum, kMse, kReshape, kGlobalAvgPool, kL2Normalize, kConcatCols,
};

std::string_view op_name(Op op);

enum class Padding { kSame, kValid };

struct Conv2dOptions {
  std::size_t stride = 1;  // 1 or 2
  Padding padding = Padding::kSame;
};

/// Handle to a node inside a Graph.
struct Var {
  std::size_t id = 0;
};

/// Define-by-run computation graph with reverse-mode differentiation.
///
/// Every op evaluates eagerly, so `value(v)` is available as soon as `v`
/// exists. Nodes are appended in creation order, which is a topological order;
/// `backward` walks them in reverse. Parameters bound with `parameter()` are
/// referenced, not copied, and must outlive the graph.
///
/// With gradients disabled the graph records values only (inference mode).
template <typename T>
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor<T> value);
  /// Leaf that receives a gradient (inputs under test, free variables).
  Var variable(Tensor<T> value);
  /// Named leaf referencing external storage; bound once per name.
  Var parameter(const std::string& name, const Tensor<T>& storage);
  Var parameter(const ParameterSet<T>& set, const std::string& name) {
    return parameter(name, set.get(name));
  }

  // Elementwise, with broadcasting over size-1 dimensions (equal rank).
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T s);
  Var add_scalar(Var a, T s);

  Var matmul(Var a, Var b);  // [M,K] x [K,N]
  Var transpose(Var a);      // 2-D only
  /// x: [N,Ci,H,W], w: [Co,Ci,k,k], bias: [Co]. Zero padding; `same` needs odd k.
  Var conv2d(Var x, Var w, std::optional<Var> bias, Conv2dOptions opt = {});
  Var upsample2x(Var x);  // nearest neighbour, [N,C,H,W] -> [N,C,2H,2W]

  Var relu(Var a);
  Var silu(Var a);
  Var sigmoid(Var a);
  /// x: [N,C,...]; gamma/beta: [C]. groups == C gives instance normalization.
  Var group_norm(Var x, Var gamma, Var beta, std::size_t groups, T eps = T(1e-5));

  Var mean(Var a);
  Var sum(Var a);
  Var mse(Var a, Var b);
  Var reshape(Var a, Shape shape);
  Var global_avg_pool(Var x);                         // [N,C,H,W] -> [N,C]
  Var l2_normalize_rows(Var x, T eps = T(1e-12));     // [N,D] rows scaled to unit norm
  Var concat_cols(const std::vector<Var>& parts);     // [N,D_k]... -> [N, sum D_k]

  const Tensor<T>& value(Var v) const { return node_value(v.id); }
  /// Gradient of the last `backward` root w.r.t. v (zeros if v was unreachable).
  Tensor<T> grad(Var v) const;
  Op op(Var v) const { return nodes_.at(v.id).op; }

  /// Clears all gradients, then back-propagates from a scalar root.
  void backward(Var root);
  /// Gradients of every bound parameter, keyed by name.
  GradientMap<T> parameter_grads() const;

  std::size_t node_count() const noexcept { return nodes_.size(); }
  bool grad_enabled() const noexcept { return grad_enabled_; }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    std::function<void(Graph&, std::size_t)> backward_fn;
  };

  const Tensor<T>& node_value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.value;
  }
  Tensor<T>& grad_buffer(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  Var push(Op op, std::vector<std::size_t> inputs, Tensor<T> value,
           std::function<void(Graph&, std::size_t)> backward_fn);
  Var binary_broadcast(Op op, Var a, Var b);
  Var unary(Op op, Var a);

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_ids_;
  std::vector<std::pair<std::string, std::size_t>> param_order_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace diffqa
