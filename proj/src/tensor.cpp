// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include "hfl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "hfl/rng.hpp"

namespace hfl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Splits `shape` at `axis` into [outer, extent, inner] so that the flat
// index of (o, k, i) is (o * extent + k) * inner + i.
struct AxisView {
  std::int64_t outer = 1;
  std::int64_t extent = 1;
  std::int64_t inner = 1;
};

AxisView axis_view(const Shape& s, int axis) {
  if (axis < 0 || axis >= s.rank())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + s.str());
  AxisView v;
  for (int d = 0; d < axis; ++d) v.outer *= s.extent(d);
  v.extent = s.extent(axis);
  for (int d = axis + 1; d < s.rank(); ++d) v.inner *= s.extent(d);
  return v;
}

// Left-pads extents to kMaxRank and derives row-major strides with 0 on
// broadcast (extent-1) axes.
struct BcastPlan {
  Shape out;
  std::array<std::int64_t, Shape::kMaxRank> ext{1, 1, 1, 1};
  std::array<std::int64_t, Shape::kMaxRank> sa{0, 0, 0, 0};
  std::array<std::int64_t, Shape::kMaxRank> sb{0, 0, 0, 0};
  bool same_shape = false;
};

BcastPlan bcast_plan(const char* what, const Shape& a, const Shape& b) {
  if (a.rank() != b.rank())
    throw ShapeError(std::string(what) + ": rank mismatch: " + a.str() + " vs " + b.str());
  BcastPlan p;
  p.same_shape = (a == b);
  const int pad = Shape::kMaxRank - a.rank();
  std::array<std::int64_t, Shape::kMaxRank> ea{1, 1, 1, 1}, eb{1, 1, 1, 1};
  for (int d = 0; d < a.rank(); ++d) {
    ea[static_cast<std::size_t>(pad + d)] = a.extent(d);
    eb[static_cast<std::size_t>(pad + d)] = b.extent(d);
  }
  for (int d = 0; d < Shape::kMaxRank; ++d) {
    const auto x = ea[static_cast<std::size_t>(d)], y = eb[static_cast<std::size_t>(d)];
    if (x != y && x != 1 && y != 1)
      throw ShapeError(std::string(what) + ": shapes not broadcastable: " + a.str() + " vs " + b.str());
    p.ext[static_cast<std::size_t>(d)] = std::max(x, y);
  }
  std::int64_t stride_a = 1, stride_b = 1;
  for (int d = Shape::kMaxRank - 1; d >= 0; --d) {
    const auto i = static_cast<std::size_t>(d);
    p.sa[i] = (ea[i] == 1) ? 0 : stride_a;
    p.sb[i] = (eb[i] == 1) ? 0 : stride_b;
    stride_a *= ea[i];
    stride_b *= eb[i];
  }
  for (int d = 0; d < a.rank(); ++d)
    p.out.push_back(static_cast<int>(p.ext[static_cast<std::size_t>(pad + d)]));
  return p;
}

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  // c (m x n) += a (m x k) . b (k x n); caller zeroes c.
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::ptrdiff_t>(i) * k;
    double* crow = c + static_cast<std::ptrdiff_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + static_cast<std::ptrdiff_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  // c (m x n) += a (m x k) . b^T with b stored (n x k).
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::ptrdiff_t>(i) * k;
    double* crow = c + static_cast<std::ptrdiff_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<std::ptrdiff_t>(j) * k;
      double s = 0.0;
      for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      crow[j] += s;
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  // c (k x n) += a^T . b with a stored (m x k), b stored (m x n).
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::ptrdiff_t>(i) * k;
    const double* brow = b + static_cast<std::ptrdiff_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      double* crow = c + static_cast<std::ptrdiff_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

double ew1_eval(EwOp op, double x) {
  switch (op) {
    case EwOp::Sigmoid:
      return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    case EwOp::Tanh:
      return std::tanh(x);
    case EwOp::Relu:
      return x > 0 ? x : 0.0;
    case EwOp::Log:
      return std::log(x);
    case EwOp::Exp:
      return std::exp(x);
    case EwOp::Neg:
      return -x;
    default:
      throw Error("bad unary tag");
  }
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Ew1: return "elementwise1";
    case Op::Ew2: return "elementwise2";
    case Op::Matmul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Softmax: return "softmax";
    case Op::Reduce: return "reduce";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Affine: return "affine";
    case Op::LayerNorm: return "layer_norm";
    case Op::MhaCore: return "mha_core";
    case Op::NeighborMean: return "neighbor_mean";
  }
  return "?";
}

const char* ew_name(EwOp op) {
  switch (op) {
    case EwOp::Add: return "add";
    case EwOp::Sub: return "sub";
    case EwOp::Mul: return "mul";
    case EwOp::Sigmoid: return "sigmoid";
    case EwOp::Tanh: return "tanh";
    case EwOp::Relu: return "relu";
    case EwOp::Log: return "log";
    case EwOp::Exp: return "exp";
    case EwOp::Neg: return "neg";
  }
  return "?";
}

EdgeGroup EdgeGroup::make(int node_count, std::vector<std::pair<int, int>> edges) {
  EdgeGroup g;
  g.node_count = node_count;
  g.indegree.assign(static_cast<std::size_t>(node_count), 0);
  for (auto [s, d] : edges) {
    if (s < 0 || s >= node_count || d < 0 || d >= node_count)
      throw GraphError("edge (" + std::to_string(s) + " -> " + std::to_string(d) +
                       ") outside node set of size " + std::to_string(node_count));
    ++g.indegree[static_cast<std::size_t>(d)];
  }
  g.edges = std::move(edges);
  return g;
}

Var Tape::push(Node&& n) {
  if (guard_ && n.op != Op::Leaf && !all_finite(n.value.values))
    throw NonFiniteError(std::string("non-finite output of ") + op_name(n.op) + " at node " +
                         std::to_string(nodes_.size()));
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor t) {
  Node n;
  n.needs_grad = t.requires_grad;
  n.value = std::move(t);
  n.op = Op::Leaf;
  return push(std::move(n));
}

Var Tape::constant(Tensor t) {
  t.requires_grad = false;
  return leaf(std::move(t));
}

std::span<const double> Tape::grad(Var v) const {
  const Node& n = node(v.id);
  if (n.op == Op::Leaf && n.value.grad.has_value()) return *n.value.grad;
  return {n.gbuf.data(), n.gbuf.size()};
}

std::span<double> Tape::grad_buf(int id) {
  Node& n = node(id);
  const auto sz = static_cast<std::size_t>(n.value.numel());
  if (n.op == Op::Leaf) {
    if (!n.value.grad.has_value() || n.value.grad->size() != sz) n.value.grad.emplace(sz, 0.0);
    return {n.value.grad->data(), sz};
  }
  if (n.gbuf.size() != sz) n.gbuf.assign(sz, 0.0);
  return {n.gbuf.data(), sz};
}

namespace {
// True if a backward pass has engaged a buffer for this node.
bool grad_engaged(const Node& n) {
  if (n.op == Op::Leaf) return n.value.grad.has_value();
  return !n.gbuf.empty();
}
std::span<const double> engaged_grad(const Node& n) {
  if (n.op == Op::Leaf) return {n.value.grad->data(), n.value.grad->size()};
  return {n.gbuf.data(), n.gbuf.size()};
}
}  // namespace

void Tape::backward(Var root) {
  if (root.tape != this) throw Error("backward: var belongs to a different tape");
  Node& r = node(root.id);
  if (r.value.numel() != 1)
    throw ShapeError("backward requires a one-element root, got " + r.value.shape.str());
  // Clear any previous sweep so repeated backward calls do not mix.
  for (auto& n : nodes_) {
    n.gbuf.clear();
    if (n.op == Op::Leaf && n.value.grad.has_value()) n.value.grad.reset();
  }
  if (!r.needs_grad) return;
  grad_buf(root.id)[0] = 1.0;
  for (int id = root.id; id >= 0; --id) {
    const Node& n = node(id);
    if (!n.needs_grad || !grad_engaged(n) || n.op == Op::Leaf) continue;
    backward_node(id);
  }
}

// --- forward ops -----------------------------------------------------------

Var elementwise(EwOp op, Var a) {
  Tape& tp = *a.tape;
  const Tensor& x = tp.value(a);
  Node n;
  n.op = Op::Ew1;
  n.ew = op;
  n.in0 = a.id;
  n.needs_grad = tp.node(a.id).needs_grad;
  n.value = Tensor(x.shape);
  for (std::size_t i = 0; i < x.values.size(); ++i) n.value.values[i] = ew1_eval(op, x.values[i]);
  return tp.push(std::move(n));
}

Var elementwise(EwOp op, Var a, Var b) {
  if (a.tape != b.tape) throw Error("elementwise: inputs on different tapes");
  Tape& tp = *a.tape;
  const Tensor& x = tp.value(a);
  const Tensor& y = tp.value(b);
  const BcastPlan p = bcast_plan(ew_name(op), x.shape, y.shape);

  Node n;
  n.op = Op::Ew2;
  n.ew = op;
  n.in0 = a.id;
  n.in1 = b.id;
  n.needs_grad = tp.node(a.id).needs_grad || tp.node(b.id).needs_grad;
  n.value = Tensor(p.out);

  const double* xa = x.values.data();
  const double* xb = y.values.data();
  double* o = n.value.values.data();
  auto apply = [op](double u, double v) {
    switch (op) {
      case EwOp::Add: return u + v;
      case EwOp::Sub: return u - v;
      case EwOp::Mul: return u * v;
      default: throw Error(std::string("elementwise: ") + ew_name(op) + " is not binary");
    }
  };
  if (p.same_shape) {
    for (std::size_t i = 0; i < x.values.size(); ++i) o[i] = apply(xa[i], xb[i]);
  } else {
    std::int64_t w = 0;
    for (std::int64_t i0 = 0; i0 < p.ext[0]; ++i0)
      for (std::int64_t i1 = 0; i1 < p.ext[1]; ++i1)
        for (std::int64_t i2 = 0; i2 < p.ext[2]; ++i2)
          for (std::int64_t i3 = 0; i3 < p.ext[3]; ++i3) {
            const auto ia = i0 * p.sa[0] + i1 * p.sa[1] + i2 * p.sa[2] + i3 * p.sa[3];
            const auto ib = i0 * p.sb[0] + i1 * p.sb[1] + i2 * p.sb[2] + i3 * p.sb[3];
            o[w++] = apply(xa[ia], xb[ib]);
          }
  }
  return tp.push(std::move(n));
}

Var matmul(Var a, Var b) {
  if (a.tape != b.tape) throw Error("matmul: inputs on different tapes");
  Tape& tp = *a.tape;
  const Tensor& x = tp.value(a);
  const Tensor& y = tp.value(b);
  if (x.shape.rank() != 2 || y.shape.rank() != 2 || x.cols() != y.rows())
    throw ShapeError("matmul: incompatible shapes " + x.shape.str() + " vs " + y.shape.str());
  Node n;
  n.op = Op::Matmul;
  n.in0 = a.id;
  n.in1 = b.id;
  n.needs_grad = tp.node(a.id).needs_grad || tp.node(b.id).needs_grad;
  n.value = Tensor({x.rows(), y.cols()});
  matmul_nn(x.values.data(), y.values.data(), n.value.values.data(), x.rows(), x.cols(), y.cols());
  return tp.push(std::move(n));
}

Var transpose(Var a) {
  Tape& tp = *a.tape;
  const Tensor& x = tp.value(a);
  if (x.shape.rank() != 2) throw ShapeError("transpose: rank-2 only, got " + x.shape.str());
  Node n;
  n.op = Op::Transpose;
  n.in0 = a.id;
  n.needs_grad = tp.node(a.id).needs_grad;
  n.value = Tensor({x.cols(), x.rows()});
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) n.value.at(j, i) = x.at(i, j);
  return tp.push(std::move(n));
}

namespace {
// Softmax of one strided lane with an optional additive mask; -inf entries
// (from values or mask) come out exactly 0. Returns false if fully masked.
bool softmax_lane(const double* x, const double* m, double* out, std::int64_t n, std::int64_t stride) {
  double mx = kNegInf;
  for (std::int64_t k = 0; k < n; ++k) {
    const double v = x[k * stride] + (m ? m[k * stride] : 0.0);
    if (v > mx) mx = v;
  }
  if (mx == kNegInf) return false;
  double sum = 0.0;
  for (std::int64_t k = 0; k < n; ++k) {
    const double v = x[k * stride] + (m ? m[k * stride] : 0.0);
    const double e = (v == kNegInf) ? 0.0 : std::exp(v - mx);
    out[k * stride] = e;
    sum += e;
  }
  const double inv = 1.0 / sum;
  for (std::int64_t k = 0; k < n; ++k) out[k * stride] *= inv;
  return true;
}
}  // namespace

void softmax_span(std::span<const double> x, std::span<double> out) {
  if (!softmax_lane(x.data(), nullptr, out.data(), static_cast<std::int64_t>(x.size()), 1))
    throw MaskError("softmax: all entries masked");
}

Var softmax(Var x, int axis, const Tensor* additive_mask) {
  Tape& tp = *x.tape;
  const Tensor& xv = tp.value(x);
  if (additive_mask && additive_mask->shape != xv.shape)
    throw ShapeError("softmax: mask shape " + additive_mask->shape.str() + " vs input " + xv.shape.str());
  const AxisView v = axis_view(xv.shape, axis);
  Node n;
  n.op = Op::Softmax;
  n.axis = axis;
  n.in0 = x.id;
  n.needs_grad = tp.node(x.id).needs_grad;
  n.value = Tensor(xv.shape);
  const double* src = xv.values.data();
  const double* msk = additive_mask ? additive_mask->values.data() : nullptr;
  double* dst = n.value.values.data();
  for (std::int64_t o = 0; o < v.outer; ++o)
    for (std::int64_t i = 0; i < v.inner; ++i) {
      const auto base = o * v.extent * v.inner + i;
      if (!softmax_lane(src + base, msk ? msk + base : nullptr, dst + base, v.extent, v.inner))
        throw MaskError("softmax: all entries masked along axis " + std::to_string(axis));
    }
  return tp.push(std::move(n));
}

Var reduce(ReduceOp op, Var x, int axis) {
  Tape& tp = *x.tape;
  const Tensor& xv = tp.value(x);
  const AxisView v = axis_view(xv.shape, axis);
  Shape out_shape;
  for (int d = 0; d < xv.shape.rank(); ++d) out_shape.push_back(d == axis ? 1 : xv.shape.extent(d));
  Node n;
  n.op = Op::Reduce;
  n.red = op;
  n.axis = axis;
  n.in0 = x.id;
  n.needs_grad = tp.node(x.id).needs_grad;
  n.value = Tensor(out_shape);
  const double* src = xv.values.data();
  double* dst = n.value.values.data();
  const double inv = 1.0 / static_cast<double>(v.extent);
  for (std::int64_t o = 0; o < v.outer; ++o)
    for (std::int64_t i = 0; i < v.inner; ++i) {
      double s = 0.0;
      for (std::int64_t k = 0; k < v.extent; ++k) s += src[(o * v.extent + k) * v.inner + i];
      dst[o * v.inner + i] = (op == ReduceOp::Mean) ? s * inv : s;
    }
  return tp.push(std::move(n));
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& tp = *parts[0].tape;
  const Shape& first = tp.value(parts[0]).shape;
  int total = 0;
  bool needs = false;
  for (const Var& p : parts) {
    if (p.tape != &tp) throw Error("concat: inputs on different tapes");
    const Shape& s = tp.value(p).shape;
    if (s.rank() != first.rank()) throw ShapeError("concat: rank mismatch " + s.str() + " vs " + first.str());
    for (int d = 0; d < s.rank(); ++d)
      if (d != axis && s.extent(d) != first.extent(d))
        throw ShapeError("concat: extent mismatch off axis: " + s.str() + " vs " + first.str());
    total += s.extent(axis);
    needs = needs || tp.node(p.id).needs_grad;
  }
  Shape out_shape;
  for (int d = 0; d < first.rank(); ++d) out_shape.push_back(d == axis ? total : first.extent(d));
  Node n;
  n.op = Op::Concat;
  n.axis = axis;
  n.needs_grad = needs;
  n.value = Tensor(out_shape);
  const AxisView ov = axis_view(out_shape, axis);
  double* dst = n.value.values.data();
  std::int64_t off = 0;
  for (const Var& p : parts) {
    n.extra.push_back(p.id);
    const Tensor& t = tp.value(p);
    const AxisView iv = axis_view(t.shape, axis);
    const double* src = t.values.data();
    for (std::int64_t o = 0; o < iv.outer; ++o)
      std::memcpy(dst + (o * ov.extent + off) * ov.inner, src + o * iv.extent * iv.inner,
                  static_cast<std::size_t>(iv.extent * iv.inner) * sizeof(double));
    off += iv.extent;
  }
  return tp.push(std::move(n));
}

Var slice(Var x, int axis, int start, int len) {
  Tape& tp = *x.tape;
  const Tensor& xv = tp.value(x);
  const AxisView v = axis_view(xv.shape, axis);
  if (start < 0 || len <= 0 || start + len > v.extent)
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + len) + ") out of " +
                     xv.shape.str() + " axis " + std::to_string(axis));
  Shape out_shape;
  for (int d = 0; d < xv.shape.rank(); ++d) out_shape.push_back(d == axis ? len : xv.shape.extent(d));
  Node n;
  n.op = Op::Slice;
  n.axis = axis;
  n.start = start;
  n.len = len;
  n.in0 = x.id;
  n.needs_grad = tp.node(x.id).needs_grad;
  n.value = Tensor(out_shape);
  const double* src = xv.values.data();
  double* dst = n.value.values.data();
  for (std::int64_t o = 0; o < v.outer; ++o)
    std::memcpy(dst + o * len * v.inner, src + (o * v.extent + start) * v.inner,
                static_cast<std::size_t>(len * v.inner) * sizeof(double));
  return tp.push(std::move(n));
}

Var affine(Var x, Var w, Var b) {
  if (x.tape != w.tape || x.tape != b.tape) throw Error("affine: inputs on different tapes");
  Tape& tp = *x.tape;
  const Tensor& xv = tp.value(x);
  const Tensor& wv = tp.value(w);
  const Tensor& bv = tp.value(b);
  if (xv.shape.rank() != 2 || wv.shape.rank() != 2 || xv.cols() != wv.rows())
    throw ShapeError("affine: incompatible shapes " + xv.shape.str() + " vs " + wv.shape.str());
  if (!(bv.shape.rank() == 2 && bv.rows() == 1 && bv.cols() == wv.cols()))
    throw ShapeError("affine: bias must be 1x" + std::to_string(wv.cols()) + ", got " + bv.shape.str());
  Node n;
  n.op = Op::Affine;
  n.in0 = x.id;
  n.in1 = w.id;
  n.in2 = b.id;
  n.needs_grad =
      tp.node(x.id).needs_grad || tp.node(w.id).needs_grad || tp.node(b.id).needs_grad;
  const int m = xv.rows(), k = xv.cols(), c = wv.cols();
  n.value = Tensor({m, c});
  double* o = n.value.values.data();
  for (int i = 0; i < m; ++i)
    std::memcpy(o + static_cast<std::ptrdiff_t>(i) * c, bv.values.data(), static_cast<std::size_t>(c) * sizeof(double));
  matmul_nn(xv.values.data(), wv.values.data(), o, m, k, c);
  return tp.push(std::move(n));
}

Var layer_norm(Var x, Var scale_p, Var shift_p, double eps) {
  if (x.tape != scale_p.tape || x.tape != shift_p.tape) throw Error("layer_norm: inputs on different tapes");
  Tape& tp = *x.tape;
  const Tensor& xv = tp.value(x);
  if (xv.shape.rank() != 2) throw ShapeError("layer_norm: rank-2 input required, got " + xv.shape.str());
  const int m = xv.rows(), h = xv.cols();
  const Tensor& g = tp.value(scale_p);
  const Tensor& s = tp.value(shift_p);
  if (g.shape != Shape{1, h} || s.shape != Shape{1, h})
    throw ShapeError("layer_norm: scale/shift must be 1x" + std::to_string(h));
  Node n;
  n.op = Op::LayerNorm;
  n.in0 = x.id;
  n.in1 = scale_p.id;
  n.in2 = shift_p.id;
  n.scalar0 = eps;
  n.needs_grad = tp.node(x.id).needs_grad || tp.node(scale_p.id).needs_grad || tp.node(shift_p.id).needs_grad;
  n.value = Tensor({m, h});
  // aux = [xhat (m*h) | inv_std (m)]
  n.aux = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m * h + m));
  double* xhat = n.aux->data();
  double* inv_std = n.aux->data() + static_cast<std::ptrdiff_t>(m) * h;
  for (int i = 0; i < m; ++i) {
    const double* row = xv.values.data() + static_cast<std::ptrdiff_t>(i) * h;
    double mean = 0.0;
    for (int j = 0; j < h; ++j) mean += row[j];
    mean /= h;
    double var = 0.0;
    for (int j = 0; j < h; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= h;
    const double r = 1.0 / std::sqrt(var + eps);
    inv_std[i] = r;
    double* hrow = xhat + static_cast<std::ptrdiff_t>(i) * h;
    double* orow = n.value.values.data() + static_cast<std::ptrdiff_t>(i) * h;
    for (int j = 0; j < h; ++j) {
      hrow[j] = (row[j] - mean) * r;
      orow[j] = hrow[j] * g.values[static_cast<std::size_t>(j)] + s.values[static_cast<std::size_t>(j)];
    }
  }
  return tp.push(std::move(n));
}

Var mha_core(Var q, Var k, Var v, int heads, double scale, const Tensor* additive_mask) {
  if (q.tape != k.tape || q.tape != v.tape) throw Error("mha_core: inputs on different tapes");
  Tape& tp = *q.tape;
  const Tensor& qv = tp.value(q);
  const Tensor& kv = tp.value(k);
  const Tensor& vv = tp.value(v);
  if (qv.shape.rank() != 2 || kv.shape.rank() != 2 || vv.shape.rank() != 2)
    throw ShapeError("mha_core: rank-2 inputs required");
  const int lq = qv.rows(), lk = kv.rows(), h = qv.cols();
  if (kv.cols() != h || vv.cols() != h || vv.rows() != lk)
    throw ShapeError("mha_core: width/length mismatch: " + qv.shape.str() + ", " + kv.shape.str() + ", " +
                     vv.shape.str());
  if (heads <= 0 || h % heads != 0)
    throw ShapeError("mha_core: width " + std::to_string(h) + " not divisible by " + std::to_string(heads) + " heads");
  if (additive_mask && additive_mask->shape != Shape{lq, lk})
    throw ShapeError("mha_core: mask must be " + std::to_string(lq) + "x" + std::to_string(lk) + ", got " +
                     additive_mask->shape.str());
  const int dh = h / heads;
  Node n;
  n.op = Op::MhaCore;
  n.in0 = q.id;
  n.in1 = k.id;
  n.in2 = v.id;
  n.heads = heads;
  n.scalar0 = scale;
  n.needs_grad = tp.node(q.id).needs_grad || tp.node(k.id).needs_grad || tp.node(v.id).needs_grad;
  n.value = Tensor({lq, h});
  // aux: attention probabilities per head, heads * lq * lk.
  n.aux = std::make_shared<std::vector<double>>(static_cast<std::size_t>(heads) * lq * lk);
  std::vector<double> srow(static_cast<std::size_t>(lk));
  for (int hd = 0; hd < heads; ++hd) {
    const int col = hd * dh;
    double* probs = n.aux->data() + static_cast<std::ptrdiff_t>(hd) * lq * lk;
    for (int i = 0; i < lq; ++i) {
      const double* qrow = qv.values.data() + static_cast<std::ptrdiff_t>(i) * h + col;
      for (int j = 0; j < lk; ++j) {
        const double* krow = kv.values.data() + static_cast<std::ptrdiff_t>(j) * h + col;
        double s = 0.0;
        for (int d = 0; d < dh; ++d) s += qrow[d] * krow[d];
        s *= scale;
        if (additive_mask) s += additive_mask->at(i, j);
        srow[static_cast<std::size_t>(j)] = s;
      }
      if (!softmax_lane(srow.data(), nullptr, probs + static_cast<std::ptrdiff_t>(i) * lk, lk, 1))
        throw MaskError("attention: query row " + std::to_string(i) + " fully masked");
      const double* prow = probs + static_cast<std::ptrdiff_t>(i) * lk;
      double* orow = n.value.values.data() + static_cast<std::ptrdiff_t>(i) * h + col;
      for (int j = 0; j < lk; ++j) {
        const double p = prow[j];
        if (p == 0.0) continue;
        const double* vrow = vv.values.data() + static_cast<std::ptrdiff_t>(j) * h + col;
        for (int d = 0; d < dh; ++d) orow[d] += p * vrow[d];
      }
    }
  }
  return tp.push(std::move(n));
}

Var neighbor_mean(Var x, std::shared_ptr<const EdgeGroup> edges) {
  Tape& tp = *x.tape;
  const Tensor& xv = tp.value(x);
  if (xv.shape.rank() != 2) throw ShapeError("neighbor_mean: rank-2 input required");
  if (xv.rows() != edges->node_count)
    throw GraphError("neighbor_mean: " + std::to_string(edges->node_count) + " nodes vs feature rows " +
                     std::to_string(xv.rows()));
  const int g = xv.cols();
  Node n;
  n.op = Op::NeighborMean;
  n.in0 = x.id;
  n.edges = std::move(edges);
  n.needs_grad = tp.node(x.id).needs_grad;
  n.value = Tensor(xv.shape);
  double* out = n.value.values.data();
  for (auto [s, d] : n.edges->edges) {
    const double* src = xv.values.data() + static_cast<std::ptrdiff_t>(s) * g;
    double* dst = out + static_cast<std::ptrdiff_t>(d) * g;
    for (int j = 0; j < g; ++j) dst[j] += src[j];
  }
  for (int vtx = 0; vtx < n.edges->node_count; ++vtx) {
    const int deg = n.edges->indegree[static_cast<std::size_t>(vtx)];
    if (deg > 1) {
      const double inv = 1.0 / deg;
      double* dst = out + static_cast<std::ptrdiff_t>(vtx) * g;
      for (int j = 0; j < g; ++j) dst[j] *= inv;
    }
  }
  return tp.push(std::move(n));
}

// --- backward --------------------------------------------------------------

void Tape::backward_node(int id) {
  Node& n = node(id);
  const std::span<const double> g = engaged_grad(n);
  switch (n.op) {
    case Op::Leaf:
      return;
    case Op::Ew1: {
      Node& a = node(n.in0);
      if (!a.needs_grad) return;
      auto ga = grad_buf(n.in0);
      const double* x = a.value.values.data();
      const double* o = n.value.values.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = 0.0;
        switch (n.ew) {
          case EwOp::Sigmoid: d = o[i] * (1.0 - o[i]); break;
          case EwOp::Tanh: d = 1.0 - o[i] * o[i]; break;
          case EwOp::Relu: d = x[i] > 0 ? 1.0 : 0.0; break;
          case EwOp::Log: d = 1.0 / x[i]; break;
          case EwOp::Exp: d = o[i]; break;
          case EwOp::Neg: d = -1.0; break;
          default: throw Error("bad unary tag in backward");
        }
        ga[i] += g[i] * d;
      }
      return;
    }
    case Op::Ew2: {
      Node& a = node(n.in0);
      Node& b = node(n.in1);
      const BcastPlan p = bcast_plan(ew_name(n.ew), a.value.shape, b.value.shape);
      const double* xa = a.value.values.data();
      const double* xb = b.value.values.data();
      std::span<double> ga = a.needs_grad ? grad_buf(n.in0) : std::span<double>{};
      std::span<double> gb = b.needs_grad ? grad_buf(n.in1) : std::span<double>{};
      if (p.same_shape) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (n.ew) {
            case EwOp::Add:
              if (!ga.empty()) ga[i] += g[i];
              if (!gb.empty()) gb[i] += g[i];
              break;
            case EwOp::Sub:
              if (!ga.empty()) ga[i] += g[i];
              if (!gb.empty()) gb[i] -= g[i];
              break;
            case EwOp::Mul:
              if (!ga.empty()) ga[i] += g[i] * xb[i];
              if (!gb.empty()) gb[i] += g[i] * xa[i];
              break;
            default: throw Error("bad binary tag in backward");
          }
        }
        return;
      }
      std::int64_t w = 0;
      for (std::int64_t i0 = 0; i0 < p.ext[0]; ++i0)
        for (std::int64_t i1 = 0; i1 < p.ext[1]; ++i1)
          for (std::int64_t i2 = 0; i2 < p.ext[2]; ++i2)
            for (std::int64_t i3 = 0; i3 < p.ext[3]; ++i3) {
              const auto ia = i0 * p.sa[0] + i1 * p.sa[1] + i2 * p.sa[2] + i3 * p.sa[3];
              const auto ib = i0 * p.sb[0] + i1 * p.sb[1] + i2 * p.sb[2] + i3 * p.sb[3];
              const double gv = g[static_cast<std::size_t>(w++)];
              switch (n.ew) {
                case EwOp::Add:
                  if (!ga.empty()) ga[static_cast<std::size_t>(ia)] += gv;
                  if (!gb.empty()) gb[static_cast<std::size_t>(ib)] += gv;
                  break;
                case EwOp::Sub:
                  if (!ga.empty()) ga[static_cast<std::size_t>(ia)] += gv;
                  if (!gb.empty()) gb[static_cast<std::size_t>(ib)] -= gv;
                  break;
                case EwOp::Mul:
                  if (!ga.empty()) ga[static_cast<std::size_t>(ia)] += gv * xb[ib];
                  if (!gb.empty()) gb[static_cast<std::size_t>(ib)] += gv * xa[ia];
                  break;
                default: throw Error("bad binary tag in backward");
              }
            }
      return;
    }
    case Op::Matmul: {
      Node& a = node(n.in0);
      Node& b = node(n.in1);
      const int m = a.value.rows(), k = a.value.cols(), c = b.value.cols();
      if (a.needs_grad)  // dA += dC . B^T
        matmul_nt_acc(g.data(), b.value.values.data(), grad_buf(n.in0).data(), m, c, k);
      if (b.needs_grad)  // dB += A^T . dC
        matmul_tn_acc(a.value.values.data(), g.data(), grad_buf(n.in1).data(), m, k, c);
      return;
    }
    case Op::Transpose: {
      Node& a = node(n.in0);
      if (!a.needs_grad) return;
      auto ga = grad_buf(n.in0);
      const int r = n.value.rows(), c = n.value.cols();  // transposed dims
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          ga[static_cast<std::size_t>(j * r + i)] += g[static_cast<std::size_t>(i * c + j)];
      return;
    }
    case Op::Softmax: {
      Node& a = node(n.in0);
      if (!a.needs_grad) return;
      auto ga = grad_buf(n.in0);
      const AxisView v = axis_view(n.value.shape, n.axis);
      const double* o = n.value.values.data();
      for (std::int64_t ot = 0; ot < v.outer; ++ot)
        for (std::int64_t i = 0; i < v.inner; ++i) {
          const auto base = ot * v.extent * v.inner + i;
          double dot = 0.0;
          for (std::int64_t kk = 0; kk < v.extent; ++kk) {
            const auto idx = base + kk * v.inner;
            dot += g[static_cast<std::size_t>(idx)] * o[idx];
          }
          for (std::int64_t kk = 0; kk < v.extent; ++kk) {
            const auto idx = base + kk * v.inner;
            ga[static_cast<std::size_t>(idx)] += o[idx] * (g[static_cast<std::size_t>(idx)] - dot);
          }
        }
      return;
    }
    case Op::Reduce: {
      Node& a = node(n.in0);
      if (!a.needs_grad) return;
      auto ga = grad_buf(n.in0);
      const AxisView v = axis_view(a.value.shape, n.axis);
      const double inv = (n.red == ReduceOp::Mean) ? 1.0 / static_cast<double>(v.extent) : 1.0;
      for (std::int64_t o = 0; o < v.outer; ++o)
        for (std::int64_t i = 0; i < v.inner; ++i) {
          const double gv = g[static_cast<std::size_t>(o * v.inner + i)] * inv;
          for (std::int64_t kk = 0; kk < v.extent; ++kk)
            ga[static_cast<std::size_t>((o * v.extent + kk) * v.inner + i)] += gv;
        }
      return;
    }
    case Op::Concat: {
      const AxisView ov = axis_view(n.value.shape, n.axis);
      std::int64_t off = 0;
      for (int pid : n.extra) {
        Node& p = node(pid);
        const AxisView iv = axis_view(p.value.shape, n.axis);
        if (p.needs_grad) {
          auto gp = grad_buf(pid);
          for (std::int64_t o = 0; o < iv.outer; ++o) {
            const double* src = g.data() + (o * ov.extent + off) * ov.inner;
            double* dst = gp.data() + o * iv.extent * iv.inner;
            for (std::int64_t t = 0; t < iv.extent * iv.inner; ++t) dst[t] += src[t];
          }
        }
        off += iv.extent;
      }
      return;
    }
    case Op::Slice: {
      Node& a = node(n.in0);
      if (!a.needs_grad) return;
      auto ga = grad_buf(n.in0);
      const AxisView v = axis_view(a.value.shape, n.axis);
      for (std::int64_t o = 0; o < v.outer; ++o) {
        const double* src = g.data() + o * n.len * v.inner;
        double* dst = ga.data() + (o * v.extent + n.start) * v.inner;
        for (std::int64_t t = 0; t < static_cast<std::int64_t>(n.len) * v.inner; ++t) dst[t] += src[t];
      }
      return;
    }
    case Op::Affine: {
      Node& x = node(n.in0);
      Node& w = node(n.in1);
      Node& b = node(n.in2);
      const int m = x.value.rows(), k = x.value.cols(), c = w.value.cols();
      if (x.needs_grad) matmul_nt_acc(g.data(), w.value.values.data(), grad_buf(n.in0).data(), m, c, k);
      if (w.needs_grad) matmul_tn_acc(x.value.values.data(), g.data(), grad_buf(n.in1).data(), m, k, c);
      if (b.needs_grad) {
        auto gb = grad_buf(n.in2);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < c; ++j) gb[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i * c + j)];
      }
      return;
    }
    case Op::LayerNorm: {
      Node& x = node(n.in0);
      Node& sc = node(n.in1);
      Node& sh = node(n.in2);
      const int m = n.value.rows(), h = n.value.cols();
      const double* xhat = n.aux->data();
      const double* inv_std = n.aux->data() + static_cast<std::ptrdiff_t>(m) * h;
      const double* gamma = sc.value.values.data();
      std::span<double> gx = x.needs_grad ? grad_buf(n.in0) : std::span<double>{};
      std::span<double> gg = sc.needs_grad ? grad_buf(n.in1) : std::span<double>{};
      std::span<double> gs = sh.needs_grad ? grad_buf(n.in2) : std::span<double>{};
      for (int i = 0; i < m; ++i) {
        const double* grow = g.data() + static_cast<std::ptrdiff_t>(i) * h;
        const double* hrow = xhat + static_cast<std::ptrdiff_t>(i) * h;
        if (!gg.empty() || !gs.empty()) {
          for (int j = 0; j < h; ++j) {
            if (!gg.empty()) gg[static_cast<std::size_t>(j)] += grow[j] * hrow[j];
            if (!gs.empty()) gs[static_cast<std::size_t>(j)] += grow[j];
          }
        }
        if (!gx.empty()) {
          double mean_d = 0.0, mean_dh = 0.0;
          for (int j = 0; j < h; ++j) {
            const double d = grow[j] * gamma[j];
            mean_d += d;
            mean_dh += d * hrow[j];
          }
          mean_d /= h;
          mean_dh /= h;
          double* gxrow = gx.data() + static_cast<std::ptrdiff_t>(i) * h;
          for (int j = 0; j < h; ++j) {
            const double d = grow[j] * gamma[j];
            gxrow[j] += inv_std[i] * (d - mean_d - hrow[j] * mean_dh);
          }
        }
      }
      return;
    }
    case Op::MhaCore: {
      Node& q = node(n.in0);
      Node& k = node(n.in1);
      Node& v = node(n.in2);
      const int lq = q.value.rows(), lk = k.value.rows(), h = q.value.cols();
      const int dh = h / n.heads;
      const double scale = n.scalar0;
      std::span<double> gq = q.needs_grad ? grad_buf(n.in0) : std::span<double>{};
      std::span<double> gk = k.needs_grad ? grad_buf(n.in1) : std::span<double>{};
      std::span<double> gv = v.needs_grad ? grad_buf(n.in2) : std::span<double>{};
      std::vector<double> da(static_cast<std::size_t>(lk));
      for (int hd = 0; hd < n.heads; ++hd) {
        const int col = hd * dh;
        const double* probs = n.aux->data() + static_cast<std::ptrdiff_t>(hd) * lq * lk;
        for (int i = 0; i < lq; ++i) {
          const double* go = g.data() + static_cast<std::ptrdiff_t>(i) * h + col;
          const double* prow = probs + static_cast<std::ptrdiff_t>(i) * lk;
          // dV[j] += p[j] * go ; da[j] = <go, V[j]>
          for (int j = 0; j < lk; ++j) {
            const double* vrow = v.value.values.data() + static_cast<std::ptrdiff_t>(j) * h + col;
            double s = 0.0;
            for (int d = 0; d < dh; ++d) s += go[d] * vrow[d];
            da[static_cast<std::size_t>(j)] = s;
            if (!gv.empty() && prow[j] != 0.0) {
              double* gvrow = gv.data() + static_cast<std::ptrdiff_t>(j) * h + col;
              for (int d = 0; d < dh; ++d) gvrow[d] += prow[j] * go[d];
            }
          }
          // softmax backward: ds = p .* (da - <da, p>)
          double dot = 0.0;
          for (int j = 0; j < lk; ++j) dot += da[static_cast<std::size_t>(j)] * prow[j];
          if (gq.empty() && gk.empty()) continue;
          const double* qrow = q.value.values.data() + static_cast<std::ptrdiff_t>(i) * h + col;
          double* gqrow = gq.empty() ? nullptr : gq.data() + static_cast<std::ptrdiff_t>(i) * h + col;
          for (int j = 0; j < lk; ++j) {
            const double ds = prow[j] * (da[static_cast<std::size_t>(j)] - dot) * scale;
            if (ds == 0.0) continue;
            const double* krow = k.value.values.data() + static_cast<std::ptrdiff_t>(j) * h + col;
            if (gqrow)
              for (int d = 0; d < dh; ++d) gqrow[d] += ds * krow[d];
            if (!gk.empty()) {
              double* gkrow = gk.data() + static_cast<std::ptrdiff_t>(j) * h + col;
              for (int d = 0; d < dh; ++d) gkrow[d] += ds * qrow[d];
            }
          }
        }
      }
      return;
    }
    case Op::NeighborMean: {
      Node& a = node(n.in0);
      if (!a.needs_grad) return;
      auto ga = grad_buf(n.in0);
      const int c = n.value.cols();
      for (auto [s, d] : n.edges->edges) {
        const double inv = 1.0 / n.edges->indegree[static_cast<std::size_t>(d)];
        const double* src = g.data() + static_cast<std::ptrdiff_t>(d) * c;
        double* dst = ga.data() + static_cast<std::ptrdiff_t>(s) * c;
        for (int j = 0; j < c; ++j) dst[j] += inv * src[j];
      }
      return;
    }
  }
}

// --- gradient check ----------------------------------------------------------

GradCheckReport grad_check(const TensorFn& f, std::span<const Tensor> inputs, double step, double tol,
                           int max_coords_per_input, std::uint64_t sample_seed) {
  // Analytic pass.
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t.with_grad()));
    Var out = f(tape, vars);
    const Tensor& ov = tape.value(out);
    if (ov.numel() != 1) throw ShapeError("grad_check: f must be scalar-valued, got " + ov.shape.str());
    if (!std::isfinite(ov.values[0])) throw NonFiniteError("grad_check: non-finite value of f at base point");
    tape.backward(out);
    for (const Var& v : vars) {
      auto g = tape.grad(v);
      std::vector<double> gv(g.begin(), g.end());
      if (gv.empty()) gv.assign(static_cast<std::size_t>(tape.value(v).numel()), 0.0);
      for (double x : gv)
        if (!std::isfinite(x)) throw NonFiniteError("grad_check: non-finite tape gradient");
      analytic.push_back(std::move(gv));
    }
  }

  auto eval_at = [&](std::span<const Tensor> pts) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : pts) {
      Tensor c = t;
      c.requires_grad = false;
      vars.push_back(tape.leaf(std::move(c)));
    }
    const double y = tape.value(f(tape, vars)).values[0];
    return y;
  };

  GradCheckReport rep;
  Rng rng(sample_seed);
  std::vector<Tensor> work(inputs.begin(), inputs.end());
  for (std::size_t ii = 0; ii < inputs.size(); ++ii) {
    const auto numel = static_cast<std::int64_t>(inputs[ii].numel());
    std::vector<std::int64_t> coords;
    if (max_coords_per_input > 0 && numel > max_coords_per_input) {
      // Deterministic distinct sample.
      std::vector<std::int64_t> all(static_cast<std::size_t>(numel));
      for (std::int64_t i = 0; i < numel; ++i) all[static_cast<std::size_t>(i)] = i;
      rng.shuffle(all);
      coords.assign(all.begin(), all.begin() + max_coords_per_input);
    } else {
      coords.resize(static_cast<std::size_t>(numel));
      for (std::int64_t i = 0; i < numel; ++i) coords[static_cast<std::size_t>(i)] = i;
    }
    for (std::int64_t c : coords) {
      const auto ci = static_cast<std::size_t>(c);
      const double saved = work[ii].values[ci];
      work[ii].values[ci] = saved + step;
      const double fp = eval_at(work);
      work[ii].values[ci] = saved - step;
      const double fm = eval_at(work);
      work[ii].values[ci] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NonFiniteError("grad_check: non-finite f while probing input " + std::to_string(ii) + " @ " +
                             std::to_string(c));
      const double fd = (fp - fm) / (2.0 * step);
      const double an = analytic[ii][ci];
      const double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      ++rep.coords_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = "input " + std::to_string(ii) + " @ " + std::to_string(c);
      }
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace hfl
