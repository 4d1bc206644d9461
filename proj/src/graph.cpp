// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include "hfl/graph.hpp"

#include <algorithm>

#include "hfl/fusion.hpp"

namespace hfl {

std::string relation_name(const Relation& r) {
  const char* sign = r.direction > 0 ? "+1" : (r.direction < 0 ? "-1" : "0");
  auto mod = [](int m) { return modality_name(static_cast<Modality>(m)); };
  return std::string(sign) + ":" + mod(r.src_mod) + "->" + mod(r.dst_mod);
}

std::vector<Relation> relation_table(const GraphConfig& cfg) {
  std::vector<Relation> table;
  if (cfg.window_past > 0)
    for (int m = 0; m < cfg.modalities; ++m) table.push_back({+1, m, m});
  if (cfg.window_future > 0)
    for (int m = 0; m < cfg.modalities; ++m) table.push_back({-1, m, m});
  if (cfg.cross_modal)
    for (int j = 0; j < cfg.modalities; ++j)
      for (int k = 0; k < cfg.modalities; ++k)
        if (k != j) table.push_back({0, k, j});
  return table;
}

TypedEdgeList build_graph(int length, const GraphConfig& cfg) {
  if (length < 1) throw GraphError("build_graph: length must be >= 1");
  if (cfg.window_past < 0 || cfg.window_future < 0) throw GraphError("build_graph: negative window");
  TypedEdgeList g;
  g.length = length;
  g.modalities = cfg.modalities;
  g.relations = relation_table(cfg);
  auto rel_index = [&](const Relation& r) {
    const auto it = std::find(g.relations.begin(), g.relations.end(), r);
    return static_cast<int>(it - g.relations.begin());
  };
  for (int m = 0; m < cfg.modalities; ++m) {
    for (int t = 0; t < length; ++t) {
      const int dst = TypedEdgeList::node_id(m, t, length);
      if (cfg.window_past > 0) {
        const int rel = rel_index({+1, m, m});
        for (int tp = std::max(0, t - cfg.window_past); tp < t; ++tp)
          g.edges.push_back({TypedEdgeList::node_id(m, tp, length), dst, rel});
      }
      if (cfg.window_future > 0) {
        const int rel = rel_index({-1, m, m});
        for (int tp = t + 1; tp <= std::min(length - 1, t + cfg.window_future); ++tp)
          g.edges.push_back({TypedEdgeList::node_id(m, tp, length), dst, rel});
      }
    }
  }
  if (cfg.cross_modal) {
    for (int j = 0; j < cfg.modalities; ++j)
      for (int k = 0; k < cfg.modalities; ++k) {
        if (k == j) continue;
        const int rel = rel_index({0, k, j});
        for (int t = 0; t < length; ++t)
          g.edges.push_back(
              {TypedEdgeList::node_id(k, t, length), TypedEdgeList::node_id(j, t, length), rel});
      }
  }
  return g;
}

RgnnParams make_rgnn(ParamStore& ps, const std::string& prefix, int relation_count, int width, int layers,
                     Rng& rng) {
  RgnnParams p;
  for (int l = 0; l < layers; ++l) {
    RgnnLayerParams lp;
    const std::string lprefix = prefix + ".layer" + std::to_string(l);
    lp.self_weight = ps.add(lprefix + ".self", glorot(width, width, rng));
    for (int r = 0; r < relation_count; ++r)
      lp.rel_weights.push_back(ps.add(lprefix + ".rel" + std::to_string(r), glorot(width, width, rng)));
    p.layers.push_back(std::move(lp));
  }
  return p;
}

GraphPlan GraphPlan::make(TypedEdgeList list) {
  GraphPlan plan;
  const int n = list.node_count();
  std::vector<std::vector<std::pair<int, int>>> per_rel(list.relations.size());
  for (const TypedEdge& e : list.edges) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
      throw GraphError("dangling edge (" + std::to_string(e.src) + " -> " + std::to_string(e.dst) + ")");
    if (e.relation < 0 || e.relation >= static_cast<int>(list.relations.size()))
      throw GraphError("edge with unknown relation " + std::to_string(e.relation));
    per_rel[static_cast<std::size_t>(e.relation)].emplace_back(e.src, e.dst);
  }
  for (auto& edges : per_rel)
    plan.groups.push_back(std::make_shared<const EdgeGroup>(EdgeGroup::make(n, std::move(edges))));
  plan.list = std::move(list);
  return plan;
}

Var rgnn_forward(Var node_features, const GraphPlan& plan, const RgnnParams& params, Binding& bind) {
  const int n = plan.list.node_count();
  if (node_features.shape().extent(0) != n)
    throw GraphError("rgnn_forward: " + std::to_string(n) + " graph nodes vs " +
                     std::to_string(node_features.shape().extent(0)) + " feature rows");
  if (plan.groups.size() != plan.list.relations.size())
    throw GraphError("rgnn_forward: plan relation groups out of sync");
  Var h = node_features;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const RgnnLayerParams& lp = params.layers[l];
    if (lp.rel_weights.size() != plan.groups.size())
      throw GraphError("rgnn_forward: layer has " + std::to_string(lp.rel_weights.size()) +
                       " relation weights, graph has " + std::to_string(plan.groups.size()));
    Var acc = matmul(h, bind[lp.self_weight]);
    for (std::size_t r = 0; r < plan.groups.size(); ++r) {
      if (plan.groups[r]->edges.empty()) continue;  // relation unused at this length
      acc = acc + matmul(neighbor_mean(h, plan.groups[r]), bind[lp.rel_weights[r]]);
    }
    h = (l + 1 < params.layers.size()) ? relu(acc) : acc;
  }
  return h;
}

Var multi_concat(Var node_embeddings, int length, int modalities) {
  const int n = node_embeddings.shape().extent(0);
  if (n != length * modalities)
    throw GraphError("multi_concat: node count " + std::to_string(n) + " != " + std::to_string(modalities) +
                     " x " + std::to_string(length));
  std::vector<Var> per_mod;
  for (int m = 0; m < modalities; ++m) per_mod.push_back(slice(node_embeddings, 0, m * length, length));
  return concat(std::span<const Var>(per_mod.data(), per_mod.size()), 1);
}

}  // namespace hfl
