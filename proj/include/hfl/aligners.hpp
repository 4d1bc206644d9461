// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mixture-of-Aligners: per ordered modality pair, a bank of cross-attention
// aligner experts mixed by a TopK-masked softmax router, a capacity-restoring
// cross-attention block, per-target modality memory, and usage accounting.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hfl/fusion.hpp"
#include "hfl/nn.hpp"
#include "hfl/tensor.hpp"

namespace hfl {

// Ordered pair (target <- source).
struct OrderedPair {
  Modality target;
  Modality source;
};

inline constexpr int kPairCount = 6;
inline constexpr std::array<OrderedPair, kPairCount> kOrderedPairs{{
    {Modality::T, Modality::A},
    {Modality::T, Modality::V},
    {Modality::A, Modality::T},
    {Modality::A, Modality::V},
    {Modality::V, Modality::T},
    {Modality::V, Modality::A},
}};

std::string pair_name(const OrderedPair& p);  // e.g. "T<-A"

// Indices of the min(K, E) largest logits; ties on the K-th value keep the
// lowest expert index. Result is sorted ascending.
std::vector<int> topk_keep_set(std::span<const double> logits, int k);

struct RoutingDecision {
  Tensor logits;          // [E]
  Tensor weights;         // [E]; zero exactly outside the kept set
  std::vector<int> kept;  // ascending, size min(K, E)
};

// Masked softmax routing over plain values. K >= E degrades to a full
// softmax. Non-finite logits raise RoutingError.
RoutingDecision topk_mask_softmax(const Tensor& logits, int k);

struct RouterParams {
  ParamId weight{};  // 2h x E
  ParamId bias{};    // 1 x E
};

// Aligner expert: one cross-attention layer followed by a small feed-forward.
struct ExpertParams {
  AttentionParams attn;
  FeedForwardParams ffn;
};

// Everything owned by one ordered pair (target <- source).
struct PairParams {
  std::vector<ExpertParams> experts;
  RouterParams router;
  BlockParams cross;  // capacity-restoring cross-attention block
};

PairParams make_pair_params(ParamStore& ps, const std::string& prefix, int width, int head_count, int inner,
                            int expert_count, Rng& rng);

// Tape-side routing decision for utterance t of the target sequence:
// logits = Router([X_j[t] ; MeanPool(X_k)]).
struct TapeRouting {
  Var logits;  // 1 x E
  Var pi;      // 1 x E
  std::vector<int> kept;
};
TapeRouting route_utterance(Var target_seq, Var source_seq, int t, const RouterParams& p, int k, Binding& bind);

// All utterances at once; row t of `pi` equals route_utterance(..., t).pi.
struct SequenceRouting {
  Var pi;  // L x E
  std::vector<std::vector<int>> kept;
};
SequenceRouting route_sequence(Var target_seq, Var source_seq, const RouterParams& p, int k, Binding& bind);

// Dense expert evaluation, row-wise TopK mixing, then the cross block:
// aligned = CrossBlock(sum_e pi[:,e] .* f_e(X_j, X_k), X_k).
struct AlignResult {
  Var aligned;  // L x h
  Var pi;       // L x E routing weights (exact zeros off the kept sets)
  std::vector<std::vector<int>> kept;
};
AlignResult align_pair(Var target_seq, Var source_seq, const PairParams& p, int k, Binding& bind);

// Per target modality: feature-wise concat of its two source-aligned
// sequences, one self-attention block; then concat across targets.
struct MemoryOutput {
  std::array<Var, kModalityCount> memory;  // each L x 2h
  Var combined;                            // L x 6h
};
MemoryOutput build_memory(std::span<const Var> aligned_pairs,  // size 6, kOrderedPairs order
                          const std::array<BlockParams, kModalityCount>& memory_blocks, Binding& bind);

// Running average expert usage and kept-set counts for one router.
struct UsageAccumulator {
  std::vector<double> pi_sum;
  std::vector<std::int64_t> kept_count;
  std::int64_t routed = 0;

  explicit UsageAccumulator(int expert_count = 0)
      : pi_sum(static_cast<std::size_t>(expert_count), 0.0),
        kept_count(static_cast<std::size_t>(expert_count), 0) {}

  void observe(std::span<const double> pi_row, std::span<const int> kept);
  void merge(const UsageAccumulator& other);
  std::vector<double> usage() const;  // pi_sum / routed
};

// sum_e u_e log u_e + log E with 0 log 0 = 0; in [0, log E], 0 iff uniform.
double load_balance_value(std::span<const double> usage);
double load_balance_value(const UsageAccumulator& acc);

// On-tape load-balancing term for one router: u = column mean of pi, then
// sum_e u_e log u_e + log E. Exactly-zero usage entries are skipped
// structurally so 0 log 0 contributes nothing (value or gradient).
Var load_balance_loss(Var pi);

}  // namespace hfl
