// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Cross-modal conversation graph: (modality, utterance) nodes, windowed
// intra-modal temporal edges typed by direction, optional same-time
// cross-modal edges, and a relation-aware message-passing network.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hfl/nn.hpp"
#include "hfl/tensor.hpp"

namespace hfl {

struct GraphConfig {
  int window_past = 4;
  int window_future = 4;
  bool cross_modal = true;
  int modalities = 3;
  int layers = 2;
};

// Edge type: temporal direction (sign of t_dst - t_src) plus the modality
// pair, read source -> destination.
struct Relation {
  int direction;  // -1, 0, +1
  int src_mod;
  int dst_mod;

  bool operator==(const Relation&) const = default;
};

std::string relation_name(const Relation& r);  // e.g. "+1:T->T"

struct TypedEdge {
  int src;       // node id
  int dst;       // node id
  int relation;  // index into relations
};

struct TypedEdgeList {
  int length = 0;      // utterances per modality
  int modalities = 0;  // node count = modalities * length
  std::vector<Relation> relations;
  std::vector<TypedEdge> edges;

  int node_count() const { return length * modalities; }
  static int node_id(int modality, int t, int length) { return modality * length + t; }
};

// All relation types a config can realize, in a fixed order (past links per
// modality, future links per modality, then cross-modal ordered pairs).
std::vector<Relation> relation_table(const GraphConfig& cfg);

// Directed edges: for each modality m and utterance t, (m,t') -> (m,t) for
// t - window_past <= t' < t (direction +1) and t < t' <= t + window_future
// (direction -1); if cross_modal, (k,t) -> (j,t) for all k != j (direction 0).
// Self-loops are not edges; the self transform is W_0.
TypedEdgeList build_graph(int length, const GraphConfig& cfg);

struct RgnnLayerParams {
  ParamId self_weight{};               // W_0, g x g
  std::vector<ParamId> rel_weights;    // W_r per relation in table order
};

struct RgnnParams {
  std::vector<RgnnLayerParams> layers;
};

RgnnParams make_rgnn(ParamStore& ps, const std::string& prefix, int relation_count, int width, int layers,
                     Rng& rng);

// Per-relation edge groups for the message-passing primitive, derived from a
// typed edge list once and reused across steps.
struct GraphPlan {
  TypedEdgeList list;
  std::vector<std::shared_ptr<const EdgeGroup>> groups;  // per relation

  static GraphPlan make(TypedEdgeList list);
};

// Per layer: h'_v = act(W_0 h_v + sum_r mean_{u in N_r(v)} W_r h_u), ReLU
// between layers, none after the last. Nodes without incoming r-edges get no
// r term. Node features are (modalities * length) x g, modality-major.
Var rgnn_forward(Var node_features, const GraphPlan& plan, const RgnnParams& params, Binding& bind);

// Restores utterance rows: row t = concat over modalities (fixed T,A,V
// order) of that utterance's node embedding; output L x (modalities * g).
Var multi_concat(Var node_embeddings, int length, int modalities);

}  // namespace hfl
