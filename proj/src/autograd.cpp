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

#include "diffqa/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace diffqa {

// ---------------------------------------------------------------------------
// ParameterSet

template <typename T>
void ParameterSet<T>::add(const std::string& name, Tensor<T> value) {
  DIFFQA_REQUIRE(!contains(name), "duplicate parameter name: " + name);
  index_.emplace(name, names_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
}

template <typename T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  DIFFQA_REQUIRE(it != index_.end(), "unknown parameter: " + name);
  return values_[it->second];
}

template <typename T>
Tensor<T>& ParameterSet<T>::get(const std::string& name) {
  auto it = index_.find(name);
  DIFFQA_REQUIRE(it != index_.end(), "unknown parameter: " + name);
  return values_[it->second];
}

template <typename T>
std::size_t ParameterSet<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

template <typename T>
bool ParameterSet<T>::congruent(const ParameterSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (values_[i].shape() != other.values_[i].shape()) return false;
  return true;
}

// ---------------------------------------------------------------------------
// helpers

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kConv2d: return "conv2d";
    case Op::kUpsample2x: return "upsample2x";
    case Op::kRelu: return "relu";
    case Op::kSilu: return "silu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kGroupNorm: return "group_norm";
    case Op::kMean: return "mean";
    case Op::kSum: return "sum";
    case Op::kMse: return "mse";
    case Op::kReshape: return "reshape";
    case Op::kGlobalAvgPool: return "global_avg_pool";
    case Op::kL2Normalize: return "l2_normalize_rows";
    case Op::kConcatCols: return "concat_cols";
  }
  return "?";
}

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

struct Broadcast {
  Shape out;
  std::vector<std::size_t> sa, sb;  // element strides in a and b per output dim
};

Broadcast make_broadcast(std::string_view op, const Shape& a, const Shape& b) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op), "rank " + shape_str(a) + " vs " + shape_str(b));
  }
  const std::size_t r = a.size();
  Broadcast bc;
  bc.out.resize(r);
  bc.sa.assign(r, 0);
  bc.sb.assign(r, 0);
  for (std::size_t d = 0; d < r; ++d) {
    if (a[d] != b[d] && a[d] != 1 && b[d] != 1) {
      throw ShapeError(std::string(op), shape_str(a) + " vs " + shape_str(b));
    }
    bc.out[d] = std::max(a[d], b[d]);
  }
  std::size_t stride_a = 1, stride_b = 1;
  for (std::size_t d = r; d-- > 0;) {
    bc.sa[d] = (a[d] == 1 && bc.out[d] != 1) ? 0 : stride_a;
    bc.sb[d] = (b[d] == 1 && bc.out[d] != 1) ? 0 : stride_b;
    stride_a *= a[d];
    stride_b *= b[d];
  }
  return bc;
}

// Calls f(out_index, a_index, b_index) for every output element in order.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t r = bc.out.size();
  const std::size_t inner = bc.out[r - 1];
  const std::size_t ia_step = bc.sa[r - 1], ib_step = bc.sb[r - 1];
  const std::size_t outer = shape_numel(bc.out) / inner;
  std::vector<std::size_t> counter(r, 0);
  std::size_t ia = 0, ib = 0, o = 0;
  for (std::size_t it = 0; it < outer; ++it) {
    for (std::size_t j = 0; j < inner; ++j) f(o + j, ia + j * ia_step, ib + j * ib_step);
    o += inner;
    for (std::size_t d = r - 1; d-- > 0;) {
      ++counter[d];
      ia += bc.sa[d];
      ib += bc.sb[d];
      if (counter[d] < bc.out[d]) break;
      ia -= bc.sa[d] * counter[d];
      ib -= bc.sb[d] * counter[d];
      counter[d] = 0;
    }
  }
}

struct ConvGeom {
  std::size_t n, ci, h, w, co, k, stride, pad, ho, wo;
  std::size_t kdim() const { return ci * k * k; }
  std::size_t pixels() const { return ho * wo; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const std::size_t P = g.pixels();
  for (std::size_t c = 0; c < g.ci; ++c) {
    const T* xc = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          T* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = xc + iy * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
  const std::size_t P = g.pixels();
  for (std::size_t c = 0; c < g.ci; ++c) {
    T* xc = dx + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = xc + iy * g.w;
          const T* src = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
T sigmoid_scalar(T x) {
  return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph core

template <typename T>
Var Graph<T>::push(Op op, std::vector<std::size_t> inputs, Tensor<T> value,
                   std::function<void(Graph&, std::size_t)> backward_fn) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  bool rg = false;
  if (grad_enabled_)
    for (auto i : inputs) rg = rg || nodes_[i].requires_grad;
  node.requires_grad = rg;
  if (rg) node.backward_fn = std::move(backward_fn);
  node.inputs = std::move(inputs);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::variable(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::parameter(const std::string& name, const Tensor<T>& storage) {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return Var{it->second};
  Node node;
  node.external = &storage;
  node.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  const std::size_t id = nodes_.size() - 1;
  param_ids_.emplace(name, id);
  param_order_.emplace_back(name, id);
  return Var{id};
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor<T>(node_value(id).shape(), T(0));
  return n.grad;
}

template <typename T>
Tensor<T> Graph<T>::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.size() == 0) return Tensor<T>(node_value(v.id).shape(), T(0));
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var root) {
  DIFFQA_REQUIRE(grad_enabled_, "backward: graph was built with gradients disabled");
  DIFFQA_REQUIRE(root.id < nodes_.size(), "backward: unknown root");
  if (node_value(root.id).size() != 1) {
    throw ContractError("backward: root must be scalar, got shape " +
                        shape_str(node_value(root.id).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor<T>();
  if (!nodes_[root.id].requires_grad) return;
  grad_buffer(root.id).fill(T(1));
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward_fn) continue;
    n.backward_fn(*this, id);
  }
}

template <typename T>
GradientMap<T> Graph<T>::parameter_grads() const {
  GradientMap<T> out;
  for (const auto& [name, id] : param_order_) out.emplace(name, grad(Var{id}));
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var Graph<T>::binary_broadcast(Op op, Var a, Var b) {
  const Tensor<T>& va = value(a);
  const Tensor<T>& vb = value(b);
  Broadcast bc = make_broadcast(op_name(op), va.shape(), vb.shape());
  Tensor<T> out(bc.out);
  T* o = out.data().data();
  const T* pa = va.data().data();
  const T* pb = vb.data().data();
  switch (op) {
    case Op::kAdd: for_each_broadcast(bc, [&](auto i, auto ia, auto ib) { o[i] = pa[ia] + pb[ib]; }); break;
    case Op::kSub: for_each_broadcast(bc, [&](auto i, auto ia, auto ib) { o[i] = pa[ia] - pb[ib]; }); break;
    case Op::kMul: for_each_broadcast(bc, [&](auto i, auto ia, auto ib) { o[i] = pa[ia] * pb[ib]; }); break;
    default: throw ContractError("binary_broadcast: unsupported op");
  }
  const std::size_t ia_id = a.id, ib_id = b.id;
  return push(op, {a.id, b.id}, std::move(out), [bc, op, ia_id, ib_id](Graph& g, std::size_t self) {
    const T* go = g.nodes_[self].grad.data().data();
    const bool need_a = g.needs_grad(ia_id), need_b = g.needs_grad(ib_id);
    T* ga = need_a ? g.grad_buffer(ia_id).data().data() : nullptr;
    T* gb = need_b ? g.grad_buffer(ib_id).data().data() : nullptr;
    const T* pa = g.node_value(ia_id).data().data();
    const T* pb = g.node_value(ib_id).data().data();
    for_each_broadcast(bc, [&](auto i, auto ia, auto ib) {
      switch (op) {
        case Op::kAdd:
          if (ga) ga[ia] += go[i];
          if (gb) gb[ib] += go[i];
          break;
        case Op::kSub:
          if (ga) ga[ia] += go[i];
          if (gb) gb[ib] -= go[i];
          break;
        default:
          if (ga) ga[ia] += go[i] * pb[ib];
          if (gb) gb[ib] += go[i] * pa[ia];
          break;
      }
    });
  });
}

template <typename T>
Var Graph<T>::add(Var a, Var b) { return binary_broadcast(Op::kAdd, a, b); }
template <typename T>
Var Graph<T>::sub(Var a, Var b) { return binary_broadcast(Op::kSub, a, b); }
template <typename T>
Var Graph<T>::mul(Var a, Var b) { return binary_broadcast(Op::kMul, a, b); }

template <typename T>
Var Graph<T>::scale(Var a, T s) {
  Tensor<T> out = value(a);
  for (auto& v : out.data()) v *= s;
  const std::size_t ia = a.id;
  return push(Op::kScale, {a.id}, std::move(out), [ia, s](Graph& g, std::size_t self) {
    const auto go = g.nodes_[self].grad.data();
    auto ga = g.grad_buffer(ia).data();
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += s * go[i];
  });
}

template <typename T>
Var Graph<T>::add_scalar(Var a, T s) {
  Tensor<T> out = value(a);
  for (auto& v : out.data()) v += s;
  const std::size_t ia = a.id;
  return push(Op::kAddScalar, {a.id}, std::move(out), [ia](Graph& g, std::size_t self) {
    const auto go = g.nodes_[self].grad.data();
    auto ga = g.grad_buffer(ia).data();
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

template <typename T>
Var Graph<T>::unary(Op op, Var a) {
  const Tensor<T>& va = value(a);
  Tensor<T> out(va.shape());
  const auto x = va.data();
  auto y = out.data();
  switch (op) {
    case Op::kRelu:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
      break;
    case Op::kSilu:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid_scalar(x[i]);
      break;
    case Op::kSigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
      break;
    default: throw ContractError("unary: unsupported op");
  }
  const std::size_t ia = a.id;
  return push(op, {a.id}, std::move(out), [ia, op](Graph& g, std::size_t self) {
    const auto go = g.nodes_[self].grad.data();
    const auto x = g.node_value(ia).data();
    const auto y = g.nodes_[self].value.data();
    auto ga = g.grad_buffer(ia).data();
    for (std::size_t i = 0; i < go.size(); ++i) {
      switch (op) {
        case Op::kRelu: ga[i] += x[i] > T(0) ? go[i] : T(0); break;
        case Op::kSilu: {
          const T s = sigmoid_scalar(x[i]);
          ga[i] += go[i] * (s + x[i] * s * (T(1) - s));
          break;
        }
        default: ga[i] += go[i] * y[i] * (T(1) - y[i]); break;
      }
    }
  });
}

template <typename T>
Var Graph<T>::relu(Var a) { return unary(Op::kRelu, a); }
template <typename T>
Var Graph<T>::silu(Var a) { return unary(Op::kSilu, a); }
template <typename T>
Var Graph<T>::sigmoid(Var a) { return unary(Op::kSigmoid, a); }

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  const Tensor<T>& va = value(a);
  const Tensor<T>& vb = value(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0)) {
    throw ShapeError("matmul", shape_str(va.shape()) + " x " + shape_str(vb.shape()));
  }
  const std::size_t M = va.dim(0), K = va.dim(1), N = vb.dim(1);
  Tensor<T> out(Shape{M, N});
  MapRM<T>(out.data().data(), M, N).noalias() =
      CMapRM<T>(va.data().data(), M, K) * CMapRM<T>(vb.data().data(), K, N);
  const std::size_t ia = a.id, ib = b.id;
  return push(Op::kMatmul, {a.id, b.id}, std::move(out), [ia, ib, M, K, N](Graph& g, std::size_t self) {
    CMapRM<T> go(g.nodes_[self].grad.data().data(), M, N);
    if (g.needs_grad(ia)) {
      MapRM<T>(g.grad_buffer(ia).data().data(), M, K).noalias() +=
          go * CMapRM<T>(g.node_value(ib).data().data(), K, N).transpose();
    }
    if (g.needs_grad(ib)) {
      MapRM<T>(g.grad_buffer(ib).data().data(), K, N).noalias() +=
          CMapRM<T>(g.node_value(ia).data().data(), M, K).transpose() * go;
    }
  });
}

template <typename T>
Var Graph<T>::transpose(Var a) {
  const Tensor<T>& va = value(a);
  if (va.rank() != 2) throw ShapeError("transpose", "expected rank 2, got " + shape_str(va.shape()));
  const std::size_t M = va.dim(0), N = va.dim(1);
  Tensor<T> out(Shape{N, M});
  MapRM<T>(out.data().data(), N, M) = CMapRM<T>(va.data().data(), M, N).transpose();
  const std::size_t ia = a.id;
  return push(Op::kTranspose, {a.id}, std::move(out), [ia, M, N](Graph& g, std::size_t self) {
    MapRM<T>(g.grad_buffer(ia).data().data(), M, N) +=
        CMapRM<T>(g.nodes_[self].grad.data().data(), N, M).transpose();
  });
}

template <typename T>
Var Graph<T>::conv2d(Var x, Var w, std::optional<Var> bias, Conv2dOptions opt) {
  const Tensor<T>& vx = value(x);
  const Tensor<T>& vw = value(w);
  if (vx.rank() != 4 || vw.rank() != 4 || vw.dim(1) != vx.dim(1) || vw.dim(2) != vw.dim(3)) {
    throw ShapeError("conv2d", "input " + shape_str(vx.shape()) + " weight " + shape_str(vw.shape()));
  }
  DIFFQA_REQUIRE(opt.stride == 1 || opt.stride == 2, "conv2d: stride must be 1 or 2");
  ConvGeom geo{vx.dim(0), vx.dim(1), vx.dim(2), vx.dim(3), vw.dim(0), vw.dim(2), opt.stride, 0, 0, 0};
  if (opt.padding == Padding::kSame) {
    DIFFQA_REQUIRE(geo.k % 2 == 1, "conv2d: same padding needs an odd kernel");
    geo.pad = geo.k / 2;
  }
  if (geo.h + 2 * geo.pad < geo.k || geo.w + 2 * geo.pad < geo.k) {
    throw ShapeError("conv2d", "kernel larger than padded input " + shape_str(vx.shape()));
  }
  geo.ho = (geo.h + 2 * geo.pad - geo.k) / geo.stride + 1;
  geo.wo = (geo.w + 2 * geo.pad - geo.k) / geo.stride + 1;
  if (bias) {
    const Tensor<T>& vb = value(*bias);
    if (vb.rank() != 1 || vb.dim(0) != geo.co) {
      throw ShapeError("conv2d", "bias " + shape_str(vb.shape()) + " for " + std::to_string(geo.co) + " outputs");
    }
  }
  const std::size_t K = geo.kdim(), P = geo.pixels();
  Tensor<T> out(Shape{geo.n, geo.co, geo.ho, geo.wo});
  AlignedVector<T> col(K * P);
  CMapRM<T> W(vw.data().data(), geo.co, K);
  for (std::size_t n = 0; n < geo.n; ++n) {
    im2col(vx.data().data() + n * geo.ci * geo.h * geo.w, geo, col.data());
    MapRM<T> o(out.data().data() + n * geo.co * P, geo.co, P);
    o.noalias() = W * CMapRM<T>(col.data(), K, P);
    if (bias) {
      const auto b = value(*bias).data();
      for (std::size_t c = 0; c < geo.co; ++c) o.row(c).array() += b[c];
    }
  }
  std::vector<std::size_t> inputs{x.id, w.id};
  if (bias) inputs.push_back(bias->id);
  const std::size_t ix = x.id, iw = w.id;
  const std::optional<std::size_t> ib = bias ? std::optional<std::size_t>(bias->id) : std::nullopt;
  return push(Op::kConv2d, std::move(inputs), std::move(out), [geo, ix, iw, ib](Graph& g, std::size_t self) {
    const std::size_t K = geo.kdim(), P = geo.pixels();
    const T* go = g.nodes_[self].grad.data().data();
    const T* px = g.node_value(ix).data().data();
    CMapRM<T> W(g.node_value(iw).data().data(), geo.co, K);
    const bool need_x = g.needs_grad(ix), need_w = g.needs_grad(iw);
    const bool need_b = ib && g.needs_grad(*ib);
    AlignedVector<T> col(K * P), dcol(need_x ? K * P : 0);
    T* gx = need_x ? g.grad_buffer(ix).data().data() : nullptr;
    T* gw = need_w ? g.grad_buffer(iw).data().data() : nullptr;
    T* gb = need_b ? g.grad_buffer(*ib).data().data() : nullptr;
    for (std::size_t n = 0; n < geo.n; ++n) {
      CMapRM<T> gout(go + n * geo.co * P, geo.co, P);
      if (need_w) {
        im2col(px + n * geo.ci * geo.h * geo.w, geo, col.data());
        MapRM<T>(gw, geo.co, K).noalias() += gout * CMapRM<T>(col.data(), K, P).transpose();
      }
      if (need_b) {
        for (std::size_t c = 0; c < geo.co; ++c) gb[c] += gout.row(c).sum();
      }
      if (need_x) {
        MapRM<T>(dcol.data(), K, P).noalias() = W.transpose() * gout;
        col2im_add(dcol.data(), geo, gx + n * geo.ci * geo.h * geo.w);
      }
    }
  });
}

template <typename T>
Var Graph<T>::upsample2x(Var x) {
  const Tensor<T>& vx = value(x);
  if (vx.rank() != 4) throw ShapeError("upsample2x", "expected [N,C,H,W], got " + shape_str(vx.shape()));
  const std::size_t planes = vx.dim(0) * vx.dim(1), H = vx.dim(2), W = vx.dim(3);
  Tensor<T> out(Shape{vx.dim(0), vx.dim(1), 2 * H, 2 * W});
  const T* src = vx.data().data();
  T* dst = out.data().data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < 2 * H; ++y)
      for (std::size_t xx = 0; xx < 2 * W; ++xx)
        dst[(p * 2 * H + y) * 2 * W + xx] = src[(p * H + y / 2) * W + xx / 2];
  const std::size_t ix = x.id;
  return push(Op::kUpsample2x, {x.id}, std::move(out), [ix, planes, H, W](Graph& g, std::size_t self) {
    const T* go = g.nodes_[self].grad.data().data();
    T* gx = g.grad_buffer(ix).data().data();
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t y = 0; y < 2 * H; ++y)
        for (std::size_t xx = 0; xx < 2 * W; ++xx)
          gx[(p * H + y / 2) * W + xx / 2] += go[(p * 2 * H + y) * 2 * W + xx];
  });
}

// ---------------------------------------------------------------------------
// Normalization

template <typename T>
Var Graph<T>::group_norm(Var x, Var gamma, Var beta, std::size_t groups, T eps) {
  const Tensor<T>& vx = value(x);
  if (vx.rank() < 2) throw ShapeError("group_norm", "expected [N,C,...], got " + shape_str(vx.shape()));
  const std::size_t N = vx.dim(0), C = vx.dim(1);
  if (groups == 0 || C % groups != 0) {
    throw ShapeError("group_norm", std::to_string(C) + " channels into " + std::to_string(groups) + " groups");
  }
  const Tensor<T>& vg = value(gamma);
  const Tensor<T>& vb = value(beta);
  if (vg.shape() != Shape{C} || vb.shape() != Shape{C}) {
    throw ShapeError("group_norm", "affine params must be [" + std::to_string(C) + "]");
  }
  const std::size_t S = vx.size() / (N * C), Cg = C / groups, m = Cg * S;
  Tensor<T> out(vx.shape());
  Tensor<T> xhat(vx.shape());
  std::vector<T> inv_std(N * groups);
  const T* px = vx.data().data();
  T* ph = xhat.data().data();
  T* po = out.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t off = (n * C + gi * Cg) * S;
      double mu = 0.0;
      for (std::size_t i = 0; i < m; ++i) mu += px[off + i];
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = px[off + i] - mu;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      inv_std[n * groups + gi] = is;
      for (std::size_t c = 0; c < Cg; ++c) {
        const std::size_t ch = gi * Cg + c;
        const T gm = vg[ch], bt = vb[ch];
        for (std::size_t s = 0; s < S; ++s) {
          const std::size_t i = off + c * S + s;
          ph[i] = static_cast<T>((px[i] - mu) * is);
          po[i] = ph[i] * gm + bt;
        }
      }
    }
  }
  const std::size_t ix = x.id, ig = gamma.id, ibt = beta.id;
  return push(Op::kGroupNorm, {x.id, gamma.id, beta.id}, std::move(out),
              [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
                const T* go = g.nodes_[self].grad.data().data();
                const T* h = xhat.data().data();
                const auto gmv = g.node_value(ig).data();
                T* gx = g.needs_grad(ix) ? g.grad_buffer(ix).data().data() : nullptr;
                T* gg = g.needs_grad(ig) ? g.grad_buffer(ig).data().data() : nullptr;
                T* gbt = g.needs_grad(ibt) ? g.grad_buffer(ibt).data().data() : nullptr;
                for (std::size_t n = 0; n < N; ++n) {
                  for (std::size_t gi = 0; gi < groups; ++gi) {
                    const std::size_t off = (n * C + gi * Cg) * S;
                    double sum_d = 0.0, sum_dh = 0.0;
                    for (std::size_t c = 0; c < Cg; ++c) {
                      const std::size_t ch = gi * Cg + c;
                      double sg = 0.0, sb = 0.0;
                      for (std::size_t s = 0; s < S; ++s) {
                        const std::size_t i = off + c * S + s;
                        const double d = static_cast<double>(go[i]) * gmv[ch];
                        sum_d += d;
                        sum_dh += d * h[i];
                        sg += static_cast<double>(go[i]) * h[i];
                        sb += go[i];
                      }
                      if (gg) gg[ch] += static_cast<T>(sg);
                      if (gbt) gbt[ch] += static_cast<T>(sb);
                    }
                    if (!gx) continue;
                    const double md = sum_d / static_cast<double>(m), mdh = sum_dh / static_cast<double>(m);
                    const double is = inv_std[n * groups + gi];
                    for (std::size_t c = 0; c < Cg; ++c) {
                      const std::size_t ch = gi * Cg + c;
                      for (std::size_t s = 0; s < S; ++s) {
                        const std::size_t i = off + c * S + s;
                        const double d = static_cast<double>(go[i]) * gmv[ch];
                        gx[i] += static_cast<T>(is * (d - md - h[i] * mdh));
                      }
                    }
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// Reductions and reshapes

template <typename T>
Var Graph<T>::mean(Var a) {
  const auto x = value(a).data();
  double s = 0.0;
  for (T v : x) s += v;
  const T n = static_cast<T>(x.size());
  const std::size_t ia = a.id;
  return push(Op::kMean, {a.id}, Tensor<T>::scalar(static_cast<T>(s / x.size())), [ia, n](Graph& g, std::size_t self) {
    const T go = g.nodes_[self].grad[0] / n;
    for (auto& v : g.grad_buffer(ia).data()) v += go;
  });
}

template <typename T>
Var Graph<T>::sum(Var a) {
  const auto x = value(a).data();
  double s = 0.0;
  for (T v : x) s += v;
  const std::size_t ia = a.id;
  return push(Op::kSum, {a.id}, Tensor<T>::scalar(static_cast<T>(s)), [ia](Graph& g, std::size_t self) {
    const T go = g.nodes_[self].grad[0];
    for (auto& v : g.grad_buffer(ia).data()) v += go;
  });
}

template <typename T>
Var Graph<T>::mse(Var a, Var b) {
  const Tensor<T>& va = value(a);
  const Tensor<T>& vb = value(b);
  if (va.shape() != vb.shape()) throw ShapeError("mse", shape_str(va.shape()) + " vs " + shape_str(vb.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = static_cast<double>(va[i]) - vb[i];
    s += d * d;
  }
  const std::size_t n = va.size();
  const std::size_t ia = a.id, ib = b.id;
  return push(Op::kMse, {a.id, b.id}, Tensor<T>::scalar(static_cast<T>(s / n)), [ia, ib, n](Graph& g, std::size_t self) {
    const T k = T(2) * g.nodes_[self].grad[0] / static_cast<T>(n);
    const auto pa = g.node_value(ia).data();
    const auto pb = g.node_value(ib).data();
    T* ga = g.needs_grad(ia) ? g.grad_buffer(ia).data().data() : nullptr;
    T* gb = g.needs_grad(ib) ? g.grad_buffer(ib).data().data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const T d = k * (pa[i] - pb[i]);
      if (ga) ga[i] += d;
      if (gb) gb[i] -= d;
    }
  });
}

template <typename T>
Var Graph<T>::reshape(Var a, Shape shape) {
  Tensor<T> out = value(a).reshaped(std::move(shape));
  const std::size_t ia = a.id;
  return push(Op::kReshape, {a.id}, std::move(out), [ia](Graph& g, std::size_t self) {
    const auto go = g.nodes_[self].grad.data();
    auto ga = g.grad_buffer(ia).data();
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

template <typename T>
Var Graph<T>::global_avg_pool(Var x) {
  const Tensor<T>& vx = value(x);
  if (vx.rank() != 4) throw ShapeError("global_avg_pool", "expected [N,C,H,W], got " + shape_str(vx.shape()));
  const std::size_t planes = vx.dim(0) * vx.dim(1), S = vx.dim(2) * vx.dim(3);
  Tensor<T> out(Shape{vx.dim(0), vx.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < S; ++i) s += vx[p * S + i];
    out[p] = static_cast<T>(s / S);
  }
  const std::size_t ix = x.id;
  return push(Op::kGlobalAvgPool, {x.id}, std::move(out), [ix, planes, S](Graph& g, std::size_t self) {
    const auto go = g.nodes_[self].grad.data();
    auto gx = g.grad_buffer(ix).data();
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < S; ++i) gx[p * S + i] += go[p] / static_cast<T>(S);
  });
}

template <typename T>
Var Graph<T>::l2_normalize_rows(Var x, T eps) {
  const Tensor<T>& vx = value(x);
  if (vx.rank() != 2) throw ShapeError("l2_normalize_rows", "expected [N,D], got " + shape_str(vx.shape()));
  const std::size_t N = vx.dim(0), D = vx.dim(1);
  Tensor<T> out(vx.shape());
  std::vector<T> norms(N);
  for (std::size_t n = 0; n < N; ++n) {
    double s = 0.0;
    for (std::size_t d = 0; d < D; ++d) s += static_cast<double>(vx[n * D + d]) * vx[n * D + d];
    norms[n] = static_cast<T>(std::sqrt(s + static_cast<double>(eps)));
    for (std::size_t d = 0; d < D; ++d) out[n * D + d] = vx[n * D + d] / norms[n];
  }
  const std::size_t ix = x.id;
  return push(Op::kL2Normalize, {x.id}, std::move(out), [ix, N, D, norms = std::move(norms)](Graph& g, std::size_t self) {
    const auto go = g.nodes_[self].grad.data();
    const auto y = g.nodes_[self].value.data();
    auto gx = g.grad_buffer(ix).data();
    for (std::size_t n = 0; n < N; ++n) {
      double dot = 0.0;
      for (std::size_t d = 0; d < D; ++d) dot += static_cast<double>(y[n * D + d]) * go[n * D + d];
      for (std::size_t d = 0; d < D; ++d) {
        const std::size_t i = n * D + d;
        gx[i] += static_cast<T>((go[i] - y[i] * dot) / norms[n]);
      }
    }
  });
}

template <typename T>
Var Graph<T>::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols", "no inputs");
  const std::size_t N = value(parts[0]).rank() == 2 ? value(parts[0]).dim(0) : 0;
  std::vector<std::size_t> ids, widths;
  std::size_t D = 0;
  for (Var p : parts) {
    const Tensor<T>& v = value(p);
    if (v.rank() != 2 || v.dim(0) != N) throw ShapeError("concat_cols", "expected [N,D] inputs, got " + shape_str(v.shape()));
    ids.push_back(p.id);
    widths.push_back(v.dim(1));
    D += v.dim(1);
  }
  Tensor<T> out(Shape{N, D});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& v = value(parts[k]);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t d = 0; d < widths[k]; ++d) out[n * D + off + d] = v[n * widths[k] + d];
    off += widths[k];
  }
  std::vector<std::size_t> inputs = ids;
  return push(Op::kConcatCols, std::move(inputs), std::move(out),
              [ids = std::move(ids), widths = std::move(widths), N, D](Graph& g, std::size_t self) {
                const auto go = g.nodes_[self].grad.data();
                std::size_t o = 0;
                for (std::size_t k = 0; k < ids.size(); ++k) {
                  if (g.needs_grad(ids[k])) {
                    auto gx = g.grad_buffer(ids[k]).data();
                    for (std::size_t n = 0; n < N; ++n)
                      for (std::size_t d = 0; d < widths[k]; ++d) gx[n * widths[k] + d] += go[n * D + o + d];
                  }
                  o += widths[k];
                }
              });
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace diffqa
