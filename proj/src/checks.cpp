// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include "hfl/checks.hpp"

#include <cmath>
#include <limits>

#include "hfl/aligners.hpp"
#include "hfl/graph.hpp"
#include "hfl/model.hpp"
#include "hfl/rng.hpp"

namespace hfl {

namespace {

Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(s);
  for (auto& v : t.values) v = scale * rng.gaussian();
  return t;
}

// Scalarize via a fixed random projection so every output coordinate carries
// gradient (a plain sum would null out softmax-style outputs).
Var project(Var x, const Tensor& r) {
  Var proj = mul(x, x.tape->constant(r));
  return reduce_sum(reduce_sum(proj, 0), 1);
}

struct Case {
  double err = 0.0;
  int checks = 0;
};

Case run_case(const TensorFn& f, std::span<const Tensor> inputs, double step, int max_coords, std::uint64_t seed) {
  GradCheckReport rep = grad_check(f, inputs, step, std::numeric_limits<double>::infinity(), max_coords, seed);
  return Case{rep.max_rel_err, rep.coords_checked};
}

SuiteResult primitives_suite(int seeds) {
  SuiteResult res{"primitives", false, 0.0, 1e-6, 0};
  for (int s = 0; s < seeds; ++s) {
    Rng rng(9000 + static_cast<std::uint64_t>(s));
    const int m = static_cast<int>(rng.uniform_int(2, 8));
    const int k = static_cast<int>(rng.uniform_int(2, 8));
    const int n = static_cast<int>(rng.uniform_int(2, 8));
    auto track = [&](Case c) {
      res.max_err = std::max(res.max_err, c.err);
      res.checks += c.checks;
    };

    {  // matmul
      Tensor r = random_tensor({m, n}, rng);
      std::vector<Tensor> in{random_tensor({m, k}, rng), random_tensor({k, n}, rng)};
      track(run_case([&](Tape&, std::span<const Var> v) { return project(matmul(v[0], v[1]), r); }, in, 1e-5, 0, 1));
    }
    {  // transpose
      Tensor r = random_tensor({n, m}, rng);
      std::vector<Tensor> in{random_tensor({m, n}, rng)};
      track(run_case([&](Tape&, std::span<const Var> v) { return project(transpose(v[0]), r); }, in, 1e-5, 0, 1));
    }
    for (EwOp op : {EwOp::Sigmoid, EwOp::Tanh, EwOp::Neg, EwOp::Exp, EwOp::Log, EwOp::Relu}) {
      Tensor x = random_tensor({m, n}, rng);
      if (op == EwOp::Log)
        for (auto& v : x.values) v = std::abs(v) + 0.5;
      if (op == EwOp::Relu)  // keep clear of the kink so central differences are valid
        for (auto& v : x.values)
          if (std::abs(v) < 1e-3) v = v < 0 ? v - 1e-3 : v + 1e-3;
      Tensor r = random_tensor({m, n}, rng);
      std::vector<Tensor> in{x};
      track(run_case([&](Tape&, std::span<const Var> v) { return project(elementwise(op, v[0]), r); }, in, 1e-5, 0, 1));
    }
    for (EwOp op : {EwOp::Add, EwOp::Sub, EwOp::Mul}) {
      // equal shapes, column broadcast, row broadcast, scalar broadcast
      const Shape shapes[4][2] = {{{m, n}, {m, n}}, {{m, n}, {m, 1}}, {{1, n}, {m, n}}, {{m, n}, {1, 1}}};
      for (const auto& sh : shapes) {
        Tensor r = random_tensor({m, n}, rng);
        std::vector<Tensor> in{random_tensor(sh[0], rng), random_tensor(sh[1], rng)};
        track(run_case([&](Tape&, std::span<const Var> v) { return project(elementwise(op, v[0], v[1]), r); }, in,
                       1e-5, 0, 1));
      }
    }
    for (int axis : {0, 1}) {  // softmax, plain and masked
      Tensor r = random_tensor({m, n}, rng);
      std::vector<Tensor> in{random_tensor({m, n}, rng)};
      track(run_case([&](Tape&, std::span<const Var> v) { return project(softmax(v[0], axis), r); }, in, 1e-5, 0, 1));
      Tensor mask({m, n});
      // Mask one entry per lane at most, so no lane is fully masked.
      for (int lane = 0; lane < (axis == 0 ? n : m); ++lane) {
        if (rng.uniform() < 0.5) continue;
        const int pos = static_cast<int>(rng.uniform_int(0, (axis == 0 ? m : n) - 1));
        if (axis == 0)
          mask.at(pos, lane) = -std::numeric_limits<double>::infinity();
        else
          mask.at(lane, pos) = -std::numeric_limits<double>::infinity();
      }
      track(run_case([&](Tape&, std::span<const Var> v) { return project(softmax(v[0], axis, &mask), r); }, in, 1e-5,
                     0, 1));
    }
    for (int axis : {0, 1}) {
      for (ReduceOp op : {ReduceOp::Sum, ReduceOp::Mean}) {
        Tensor r = random_tensor(axis == 0 ? Shape{1, n} : Shape{m, 1}, rng);
        std::vector<Tensor> in{random_tensor({m, n}, rng)};
        track(run_case([&](Tape&, std::span<const Var> v) { return project(reduce(op, v[0], axis), r); }, in, 1e-5, 0,
                       1));
      }
    }
    {  // concat + slice
      Tensor r = random_tensor({m, 2 * n}, rng);
      std::vector<Tensor> in{random_tensor({m, n}, rng), random_tensor({m, n}, rng)};
      track(run_case(
          [&](Tape&, std::span<const Var> v) {
            Var c = concat({v[0], v[1]}, 1);
            return project(slice(c, 1, 0, 2 * n), r);
          },
          in, 1e-5, 0, 1));
      Tensor r2 = random_tensor({m, 1}, rng);
      track(run_case([&](Tape&, std::span<const Var> v) { return project(slice(v[0], 1, n / 2, 1), r2); }, in, 1e-5, 0,
                     1));
    }
    {  // affine
      Tensor r = random_tensor({m, n}, rng);
      std::vector<Tensor> in{random_tensor({m, k}, rng), random_tensor({k, n}, rng), random_tensor({1, n}, rng)};
      track(run_case([&](Tape&, std::span<const Var> v) { return project(affine(v[0], v[1], v[2]), r); }, in, 1e-5, 0,
                     1));
    }
    {  // layer_norm
      Tensor r = random_tensor({m, n}, rng);
      std::vector<Tensor> in{random_tensor({m, n}, rng), random_tensor({1, n}, rng), random_tensor({1, n}, rng)};
      track(run_case([&](Tape&, std::span<const Var> v) { return project(layer_norm(v[0], v[1], v[2]), r); }, in, 1e-5,
                     0, 1));
    }
    {  // mha_core, 2 heads, with and without mask
      const int h = 8, lq = m, lk = n;
      Tensor r = random_tensor({lq, h}, rng);
      std::vector<Tensor> in{random_tensor({lq, h}, rng), random_tensor({lk, h}, rng), random_tensor({lk, h}, rng)};
      track(run_case([&](Tape&, std::span<const Var> v) { return project(mha_core(v[0], v[1], v[2], 2, 0.5), r); }, in,
                     1e-5, 0, 1));
      Tensor mask({lq, lk});
      for (int i = 0; i < lq; ++i) {
        const int drop = static_cast<int>(rng.uniform_int(0, lk - 1));
        for (int j = 0; j < lk; ++j)
          if (j == drop && lk > 1) mask.at(i, j) = -std::numeric_limits<double>::infinity();
      }
      track(run_case([&](Tape&, std::span<const Var> v) { return project(mha_core(v[0], v[1], v[2], 2, 0.5, &mask), r); },
                     in, 1e-5, 0, 1));
    }
    {  // neighbor_mean over a random digraph
      const int nodes = static_cast<int>(rng.uniform_int(2, 8));
      std::vector<std::pair<int, int>> edges;
      for (int u = 0; u < nodes; ++u)
        for (int w = 0; w < nodes; ++w)
          if (u != w && rng.uniform() < 0.4) edges.emplace_back(u, w);
      auto group = std::make_shared<const EdgeGroup>(EdgeGroup::make(nodes, std::move(edges)));
      Tensor r = random_tensor({nodes, k}, rng);
      std::vector<Tensor> in{random_tensor({nodes, k}, rng)};
      track(run_case([&](Tape&, std::span<const Var> v) { return project(neighbor_mean(v[0], group), r); }, in, 1e-5,
                     0, 1));
    }
  }
  res.pass = res.max_err <= res.tol;
  return res;
}

SuiteResult hgf_suite(int seeds) {
  SuiteResult res{"hgf", false, 0.0, 1e-5, 0};
  for (int s = 0; s < seeds; ++s) {
    Rng rng(17000 + static_cast<std::uint64_t>(s));
    const int l = static_cast<int>(rng.uniform_int(1, 5));
    const int d = static_cast<int>(rng.uniform_int(2, 6));
    const int h = 8;
    ParamStore store;
    Rng init = rng.derive(1);
    EncoderParams enc = make_encoder(store, "enc", d, h, 2, 12, init);
    std::vector<Tensor> inputs;
    inputs.push_back(random_tensor({l, d}, rng));          // content
    inputs.push_back(random_tensor({l, d}, rng));          // hotspot
    inputs.push_back(random_tensor({2 * d, 1}, rng, 0.5));  // gate weight
    inputs.push_back(random_tensor({1, 1}, rng, 0.2));      // gate bias
    for (int i = 0; i < store.count(); ++i) inputs.push_back(store.tensor(i));
    Tensor r = random_tensor({l, h}, rng);
    auto f = [&](Tape& tape, std::span<const Var> v) {
      Binding bind(tape, store, v.subspan(4));
      GateResult g = hgf_gate_vars(v[0], v[1], v[2], v[3]);
      Var x = encode_modality(g.fused, enc, bind);
      return project(x, r);
    };
    Case c = run_case(f, inputs, 1e-5, 12, 100 + static_cast<std::uint64_t>(s));
    res.max_err = std::max(res.max_err, c.err);
    res.checks += c.checks;
  }
  res.pass = res.max_err <= res.tol;
  return res;
}

SuiteResult moa_suite(int seeds) {
  SuiteResult res{"moa", false, 0.0, 1e-4, 0};
  for (int s = 0; s < seeds; ++s) {
    Rng rng(23000 + static_cast<std::uint64_t>(s));
    const int l = 3, lk = 4, h = 8, experts = 3, topk = 2;
    ParamStore store;
    Rng init = rng.derive(1);
    PairParams pair = make_pair_params(store, "pair", h, 2, 12, experts, init);
    std::array<BlockParams, kModalityCount> mem_blocks;
    for (int j = 0; j < kModalityCount; ++j)
      mem_blocks[static_cast<std::size_t>(j)] =
          make_block(store, "mem" + std::to_string(j), 2 * h, 2, 12, init);
    std::vector<Tensor> inputs;
    inputs.push_back(random_tensor({l, h}, rng));   // target sequence
    inputs.push_back(random_tensor({lk, h}, rng));  // source sequence
    for (int i = 0; i < store.count(); ++i) inputs.push_back(store.tensor(i));
    Tensor r1 = random_tensor({l, h}, rng);
    Tensor r2 = random_tensor({l, 6 * h}, rng);
    auto f = [&](Tape& tape, std::span<const Var> v) {
      Binding bind(tape, store, v.subspan(2));
      AlignResult a = align_pair(v[0], v[1], pair, topk, bind);
      std::array<Var, kPairCount> aligned;
      aligned.fill(a.aligned);
      MemoryOutput mem = build_memory(std::span<const Var>(aligned.data(), aligned.size()), mem_blocks, bind);
      return project(a.aligned, r1) + project(mem.combined, r2) + load_balance_loss(a.pi);
    };
    Case c = run_case(f, inputs, 1e-5, 8, 200 + static_cast<std::uint64_t>(s));
    res.max_err = std::max(res.max_err, c.err);
    res.checks += c.checks;
  }
  res.pass = res.max_err <= res.tol;
  return res;
}

SuiteResult graph_suite(int seeds) {
  SuiteResult res{"graph", false, 0.0, 1e-5, 0};
  for (int s = 0; s < seeds; ++s) {
    Rng rng(31000 + static_cast<std::uint64_t>(s));
    const int l = 2, g = 6;
    GraphConfig cfg;
    cfg.window_past = static_cast<int>(rng.uniform_int(1, 2));
    cfg.window_future = static_cast<int>(rng.uniform_int(1, 2));
    cfg.cross_modal = true;
    cfg.layers = 2;
    GraphPlan plan = GraphPlan::make(build_graph(l, cfg));
    ParamStore store;
    Rng init = rng.derive(1);
    RgnnParams params = make_rgnn(store, "gnn", static_cast<int>(plan.list.relations.size()), g, cfg.layers, init);
    std::vector<Tensor> inputs;
    inputs.push_back(random_tensor({l * kModalityCount, g}, rng));
    for (int i = 0; i < store.count(); ++i) inputs.push_back(store.tensor(i));
    Tensor r = random_tensor({l, kModalityCount * g}, rng);
    auto f = [&](Tape& tape, std::span<const Var> v) {
      Binding bind(tape, store, v.subspan(1));
      Var nodes = rgnn_forward(v[0], plan, params, bind);
      return project(multi_concat(nodes, l, kModalityCount), r);
    };
    Case c = run_case(f, inputs, 1e-5, 0, 300 + static_cast<std::uint64_t>(s));
    res.max_err = std::max(res.max_err, c.err);
    res.checks += c.checks;
  }
  res.pass = res.max_err <= res.tol;
  return res;
}

SuiteResult model_suite(int seeds) {
  SuiteResult res{"model", false, 0.0, 1e-4, 0};
  for (int s = 0; s < seeds; ++s) {
    Rng rng(47000 + static_cast<std::uint64_t>(s));
    ModelConfig mc;
    mc.dim_t = mc.dim_a = mc.dim_v = 4;
    mc.hidden = 8;
    mc.heads = 2;
    mc.ffn_inner = 12;
    mc.experts = 2;
    mc.topk = 1;
    mc.classes = 3;
    mc.lb_weight = 0.01;
    mc.graph.window_past = mc.graph.window_future = 2;
    Model model(mc, 5000 + static_cast<std::uint64_t>(s));

    DialogueSample d;
    d.id = 0;
    const int l = 2;
    for (int t = 0; t < l; ++t) d.labels.push_back(static_cast<int>(rng.uniform_int(0, mc.classes - 1)));
    for (Modality m : kModalities) {
      d.track(m).modality = m;
      d.track(m).content = random_tensor({l, 4}, rng);
      d.track(m).hotspot = random_tensor({l, 4}, rng);
    }

    const ParamStore& ps = model.params();
    std::vector<Tensor> inputs;
    for (int i = 0; i < ps.count(); ++i) inputs.push_back(ps.tensor(i));
    auto f = [&](Tape& tape, std::span<const Var> v) {
      Binding bind(tape, ps, v);
      Model::Forward fw = model.forward(tape, bind, d);
      Var task = task_loss(fw.logits, d.labels);
      return total_loss(task, fw.lb, mc.lb_weight).total;
    };
    Case c = run_case(f, inputs, 1e-5, 4, 400 + static_cast<std::uint64_t>(s));
    res.max_err = std::max(res.max_err, c.err);
    res.checks += c.checks;
  }
  res.pass = res.max_err <= res.tol;
  return res;
}

}  // namespace

std::vector<SuiteResult> gradcheck_suite(const std::string& module, int seeds) {
  std::vector<SuiteResult> out;
  const bool all = module == "all";
  if (all || module == "primitives") out.push_back(primitives_suite(seeds));
  if (all || module == "hgf") out.push_back(hgf_suite(seeds));
  if (all || module == "moa") out.push_back(moa_suite(seeds));
  if (all || module == "graph") out.push_back(graph_suite(seeds));
  if (all || module == "model") out.push_back(model_suite(seeds));
  if (out.empty())
    throw ConfigError("unknown gradcheck module '" + module + "' (all | primitives | hgf | moa | graph | model)");
  return out;
}

}  // namespace hfl
