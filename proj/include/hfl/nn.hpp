// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reusable neural blocks: multi-head attention (self and cross), position-wise
// feed-forward, pre-normalization residual blocks, and parameter handling.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hfl/rng.hpp"
#include "hfl/tensor.hpp"

namespace hfl {

using ParamId = int;

// Flat, name-ordered parameter storage. Registration order is the canonical
// order for optimizer state and checkpoints.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor init) {
    init.requires_grad = true;
    items_.emplace_back(std::move(name), std::move(init));
    return static_cast<ParamId>(items_.size()) - 1;
  }

  int count() const { return static_cast<int>(items_.size()); }
  Tensor& tensor(ParamId id) { return items_[static_cast<std::size_t>(id)].second; }
  const Tensor& tensor(ParamId id) const { return items_[static_cast<std::size_t>(id)].second; }
  const std::string& name(ParamId id) const { return items_[static_cast<std::size_t>(id)].first; }

  std::int64_t total_size() const {
    std::int64_t n = 0;
    for (const auto& [_, t] : items_) n += t.numel();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// Per-step view of a ParamStore on a tape. Parameters are bound lazily so a
// forward pass only copies what it touches.
class Binding {
 public:
  Binding(Tape& tape, const ParamStore& store)
      : tape_(&tape), store_(&store), cache_(static_cast<std::size_t>(store.count())) {}

  // Pre-bound variant: vars[i] stands in for parameter i (one var per store
  // entry). Lets a gradient check perturb parameters as plain inputs.
  Binding(Tape& tape, const ParamStore& store, std::span<const Var> preset)
      : tape_(&tape), store_(&store), cache_(preset.begin(), preset.end()) {
    if (static_cast<int>(cache_.size()) != store.count())
      throw Error("binding preset size does not match parameter store");
  }

  Var operator[](ParamId id) {
    Var& slot = cache_[static_cast<std::size_t>(id)];
    if (!slot.valid()) slot = tape_->leaf(store_->tensor(id));
    return slot;
  }

  bool bound(ParamId id) const { return cache_[static_cast<std::size_t>(id)].valid(); }

  // Gradient after backward; empty when the parameter was unused (treat as 0).
  std::span<const double> grad(ParamId id) const {
    const Var& slot = cache_[static_cast<std::size_t>(id)];
    if (!slot.valid()) return {};
    return tape_->grad(slot);
  }

 private:
  Tape* tape_;
  const ParamStore* store_;
  std::vector<Var> cache_;
};

// Glorot-uniform weight, limit sqrt(6 / (fan_in + fan_out)).
Tensor glorot(int fan_in, int fan_out, Rng& rng);

struct AttentionParams {
  int head_count = 0;
  ParamId wq{}, bq{}, wk{}, bk{}, wv{}, bv{}, wo{}, bo{};
};

enum class Activation : std::uint8_t { Tanh, Relu };

struct FeedForwardParams {
  ParamId w1{}, b1{}, w2{}, b2{};
  Activation act = Activation::Relu;
};

struct NormParams {
  ParamId scale{}, shift{};
};

// Pre-norm residual block: attention sublayer + feed-forward sublayer.
struct BlockParams {
  AttentionParams attn;
  FeedForwardParams ffn;
  NormParams norm1, norm2;
};

AttentionParams make_attention(ParamStore& ps, const std::string& prefix, int width, int head_count, Rng& rng);
FeedForwardParams make_feed_forward(ParamStore& ps, const std::string& prefix, int width, int inner, Rng& rng,
                                    Activation act = Activation::Relu);
NormParams make_norm(ParamStore& ps, const std::string& prefix, int width);
BlockParams make_block(ParamStore& ps, const std::string& prefix, int width, int head_count, int inner, Rng& rng);

// Scaled dot-product multi-head attention over projected q/k/v, heads
// concatenated, output projection applied. Self-attention is the call with
// key_value_seq == query_seq. `mask`, when given, is Lq x Lk; true = attend.
// A fully-false mask row raises MaskError.
Var attention(Var query_seq, Var key_value_seq, const AttentionParams& p, Binding& bind,
              const std::vector<std::vector<bool>>* mask = nullptr);

Var feed_forward(Var x, const FeedForwardParams& p, Binding& bind);

// x + SelfAttn(norm(x)), then + FFN(norm(.)).
Var encoder_block(Var x, const BlockParams& p, Binding& bind);

// target + CrossAttn(norm(target), source), then + FFN(norm(.)).
Var cross_block(Var target, Var source, const BlockParams& p, Binding& bind);

}  // namespace hfl
