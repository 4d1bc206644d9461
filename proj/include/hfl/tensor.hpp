// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense-tensor engine with reverse-mode differentiation on an
// explicit tape, plus a central-finite-difference gradient checker.
//
// Conventions:
//   - 64-bit reals everywhere, row-major layout, rank <= 4 (rank 2 in
//     practice).
//   - Binary elementwise ops require equal rank; an extent-1 axis on either
//     operand broadcasts. There is no implicit rank promotion.
//   - Reductions keep the reduced axis at extent 1.
//   - Masking uses a -inf sentinel consumed only by softmax (either inside
//     the input values or via an additive mask tensor applied pre-softmax).
//   - Tensors on a tape are never mutated in place; a tape is single-threaded.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hfl/common.hpp"

namespace hfl {

class Shape {
 public:
  static constexpr int kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<int> extents) {
    for (int e : extents) push_back(e);
  }

  void push_back(int extent) {
    if (rank_ >= kMaxRank) throw ShapeError("shape rank exceeds " + std::to_string(kMaxRank));
    if (extent <= 0) throw ShapeError("shape extents must be positive, got " + std::to_string(extent));
    ext_[static_cast<std::size_t>(rank_++)] = extent;
  }

  int rank() const { return rank_; }
  int extent(int axis) const { return ext_[static_cast<std::size_t>(axis)]; }
  int operator[](int axis) const { return extent(axis); }

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int d = 0; d < rank_; ++d) n *= ext_[static_cast<std::size_t>(d)];
    return rank_ == 0 ? 0 : n;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int d = 0; d < rank_; ++d)
      if (ext_[static_cast<std::size_t>(d)] != o.ext_[static_cast<std::size_t>(d)]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s;
    for (int d = 0; d < rank_; ++d) {
      if (d) s += "x";
      s += std::to_string(ext_[static_cast<std::size_t>(d)]);
    }
    return rank_ ? s : std::string("scalar");
  }

 private:
  std::array<int, kMaxRank> ext_{1, 1, 1, 1};
  int rank_ = 0;
};

struct Tensor {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), values(static_cast<std::size_t>(s.numel()), 0.0) {}
  Tensor(Shape s, std::vector<double> v) : shape(s), values(std::move(v)) {
    if (static_cast<std::int64_t>(values.size()) != shape.numel())
      throw ShapeError("tensor " + shape.str() + " given " + std::to_string(values.size()) + " values");
  }

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, double v) {
    Tensor t(s);
    std::fill(t.values.begin(), t.values.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
  static Tensor row(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({1, n}, std::move(v));
  }
  static Tensor vec(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
  }
  static Tensor from_rows(const std::vector<std::vector<double>>& rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r ? static_cast<int>(rows[0].size()) : 0;
    Tensor t({r, c});
    for (int i = 0; i < r; ++i) {
      if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != c)
        throw ShapeError("ragged row list");
      for (int j = 0; j < c; ++j)
        t.values[static_cast<std::size_t>(i * c + j)] = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return t;
  }

  std::int64_t numel() const { return shape.numel(); }
  int rows() const { return shape.extent(0); }
  int cols() const { return shape.extent(1); }
  double at(int i) const { return values[static_cast<std::size_t>(i)]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i * cols() + j)]; }
  double& at(int i, int j) { return values[static_cast<std::size_t>(i * cols() + j)]; }

  Tensor with_grad() const {
    Tensor t = *this;
    t.requires_grad = true;
    return t;
  }
};

enum class Op : std::uint8_t {
  Leaf,
  Ew1,
  Ew2,
  Matmul,
  Transpose,
  Softmax,
  Reduce,
  Concat,
  Slice,
  Affine,
  LayerNorm,
  MhaCore,
  NeighborMean,
};

enum class EwOp : std::uint8_t { Add, Sub, Mul, Sigmoid, Tanh, Relu, Log, Exp, Neg };
enum class ReduceOp : std::uint8_t { Sum, Mean };

const char* op_name(Op op);
const char* ew_name(EwOp op);

// Directed edges of one relation over a fixed node set; used by the
// relational message-passing primitive.
struct EdgeGroup {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;  // (src, dst)
  std::vector<int> indegree;               // per dst node

  static EdgeGroup make(int node_count, std::vector<std::pair<int, int>> edges);
};

struct Node {
  Tensor value;
  Op op = Op::Leaf;
  EwOp ew = EwOp::Add;
  ReduceOp red = ReduceOp::Sum;
  int axis = 0;
  int in0 = -1, in1 = -1, in2 = -1;
  std::vector<int> extra;  // concat inputs
  int start = 0, len = 0;  // slice
  int heads = 0;           // mha
  double scalar0 = 0.0;    // mha scale / layer-norm eps
  std::shared_ptr<const EdgeGroup> edges;
  std::shared_ptr<std::vector<double>> aux;  // op-specific forward state
  bool needs_grad = false;
  std::vector<double> gbuf;  // non-leaf gradient accumulator
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& val() const;
  const Shape& shape() const { return val().shape; }
};

class Tape {
 public:
  explicit Tape(bool guard_non_finite = false) : guard_(guard_non_finite) { nodes_.reserve(1024); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Wraps a tensor as a leaf; it participates in backward iff requires_grad.
  Var leaf(Tensor t);
  // Leaf that never receives gradient (masks, fixed data, constants).
  Var constant(Tensor t);
  Var scalar_const(double v) { return constant(Tensor::scalar(v)); }

  // Reverse sweep from a one-element root. Gradients accumulate additively;
  // leaves with requires_grad end up with their Tensor::grad slot filled.
  void backward(Var root);

  const Tensor& value(Var v) const { return node(v.id).value; }
  // Gradient of the last backward() wrt node v; empty if none reached it.
  std::span<const double> grad(Var v) const;

  int size() const { return static_cast<int>(nodes_.size()); }
  bool guard_non_finite() const { return guard_; }
  void set_guard_non_finite(bool g) { guard_ = g; }

  // Drops all nodes but keeps the allocation.
  void reset() { nodes_.clear(); }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Var push(Node&& n);

 private:
  void backward_node(int id);
  // Accumulation buffer for node id, engaged (zero-filled) on first use.
  std::span<double> grad_buf(int id);

  std::vector<Node> nodes_;
  bool guard_ = false;
};

inline const Tensor& Var::val() const { return tape->value(*this); }

// --- primitive operations ----------------------------------------------

Var elementwise(EwOp op, Var a);          // unary tags
Var elementwise(EwOp op, Var a, Var b);   // binary tags, broadcasting
Var matmul(Var a, Var b);
Var transpose(Var a);
// Softmax along `axis`. `additive_mask`, when given, must match the input
// shape; entries of -inf mark masked positions, which come out exactly 0.
Var softmax(Var x, int axis, const Tensor* additive_mask = nullptr);
Var reduce(ReduceOp op, Var x, int axis);
Var concat(std::span<const Var> parts, int axis);
Var slice(Var x, int axis, int start, int len);
// y = x.W + b with b a 1xN row broadcast over rows.
Var affine(Var x, Var w, Var b);
// Row-wise feature normalization: (x - mean) / sqrt(var + eps) * scale + shift.
Var layer_norm(Var x, Var scale, Var shift, double eps = 1e-5);
// Multi-head scaled dot-product attention core on already-projected q/k/v.
// `additive_mask` (Lq x Lk) applies to every head.
Var mha_core(Var q, Var k, Var v, int heads, double scale, const Tensor* additive_mask = nullptr);
// out[v] = mean of x[u] over incoming edges (u -> v); zero row if none.
Var neighbor_mean(Var x, std::shared_ptr<const EdgeGroup> edges);

inline Var add(Var a, Var b) { return elementwise(EwOp::Add, a, b); }
inline Var sub(Var a, Var b) { return elementwise(EwOp::Sub, a, b); }
inline Var mul(Var a, Var b) { return elementwise(EwOp::Mul, a, b); }
inline Var sigmoid(Var a) { return elementwise(EwOp::Sigmoid, a); }
inline Var tanh(Var a) { return elementwise(EwOp::Tanh, a); }
inline Var relu(Var a) { return elementwise(EwOp::Relu, a); }
inline Var log(Var a) { return elementwise(EwOp::Log, a); }
inline Var exp(Var a) { return elementwise(EwOp::Exp, a); }
inline Var neg(Var a) { return elementwise(EwOp::Neg, a); }
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }

inline Var reduce_sum(Var x, int axis) { return reduce(ReduceOp::Sum, x, axis); }
inline Var reduce_mean(Var x, int axis) { return reduce(ReduceOp::Mean, x, axis); }
inline Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}
// x * c with a {1,1} constant.
inline Var scale(Var x, double c) { return mul(x, x.tape->scalar_const(c)); }

// --- gradient checking ---------------------------------------------------

using TensorFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  int coords_checked = 0;
  std::string worst;  // "input 1 @ 7"
};

// Compares the tape gradient of a scalar-valued f against central finite
// differences. rel err = |a - b| / max(1, |a|, |b|). When
// max_coords_per_input > 0, at most that many coordinates per input are
// probed (chosen deterministically from sample_seed).
GradCheckReport grad_check(const TensorFn& f, std::span<const Tensor> inputs, double step, double tol,
                           int max_coords_per_input = 0, std::uint64_t sample_seed = 0);

// Plain softmax over a contiguous lane; shared by routing and the tape op.
void softmax_span(std::span<const double> x, std::span<double> out);

}  // namespace hfl
