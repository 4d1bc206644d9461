// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Hotspot-gated fusion: per-utterance sigmoid-gated interpolation between a
// global content sequence and a hotspot sequence, then encoding into the
// shared hidden space.
#pragma once

#include <array>
#include <string>

#include "hfl/nn.hpp"
#include "hfl/tensor.hpp"

namespace hfl {

enum class Modality : int { T = 0, A = 1, V = 2 };
inline constexpr int kModalityCount = 3;
inline constexpr std::array<Modality, 3> kModalities{Modality::T, Modality::A, Modality::V};
const char* modality_name(Modality m);

// Content and hotspot sequences of one modality for one dialogue; both L x d.
struct ModalPair {
  Modality modality = Modality::T;
  Tensor content;
  Tensor hotspot;
};

// One scalar gate per utterance: weight over [content || hotspot] features.
struct GateParams {
  ParamId weight{};  // (2 d_m) x 1
  ParamId bias{};    // 1 x 1
};

GateParams make_gate(ParamStore& ps, const std::string& prefix, int feature_dim, Rng& rng);

// Affine projection d_m -> h followed by one self-attention encoder block.
struct EncoderParams {
  ParamId proj_w{}, proj_b{};
  BlockParams block;
};

EncoderParams make_encoder(ParamStore& ps, const std::string& prefix, int in_dim, int width, int head_count,
                           int inner, Rng& rng);

struct GateResult {
  Var fused;  // Z_m, L x d_m
  Var alpha;  // L x 1, entries in (0, 1)
};

// alpha = sigmoid(W [C || H] + b); Z = C + alpha .* (H - C). Every row of Z
// is a convex combination of the matching rows of C and H.
GateResult hgf_gate(Tape& tape, const ModalPair& pair, const GateParams& p, Binding& bind);

// Same composition over explicit nodes (content/hotspot may be leaves that
// receive gradient, e.g. under a finite-difference check).
GateResult hgf_gate_vars(Var content, Var hotspot, Var weight, Var bias);

// X_m = encoder_block(affine(Z_m)), L x h.
Var encode_modality(Var fused, const EncoderParams& p, Binding& bind);

// No-fusion baseline: the content sequence passes through untouched and the
// hotspot sequence is ignored.
Var ablation_bypass(Tape& tape, const ModalPair& pair);

}  // namespace hfl
