// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one line per criterion, nonzero exit when any fails.
// Criteria run on the reference synthetic corpus (generator defaults) or on
// large randomized batches, with every tolerance pinned in code.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "hfl/checks.hpp"
#include "hfl/train.hpp"
#include "json.hpp"

using namespace hfl;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s - %s (%s)\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string out_dir(const std::string& leaf) {
  const auto p = std::filesystem::temp_directory_path() / "hfl_acceptance" / leaf;
  return p.string();
}

// --- criterion 1: ablation ladder trend --------------------------------------

// Ladder run configuration. The corpus is the generator-default corpus; the
// runtime hyperparameters are the harness defaults except for the learning
// rate and plateau patience, which are tuned for the 15-minute single-core
// budget (the full mixture model needs a slower-decaying schedule to finish
// its climb).
RunConfig ladder_config(std::uint64_t seed) {
  RunConfig cfg;
  cfg.epochs = 40;
  cfg.lr = 2e-3;
  cfg.plateau.patience = 10;
  cfg.seed = seed;
  cfg.out_dir = out_dir("ladder_seed" + std::to_string(seed));
  return cfg;
}

void criterion_ladder() {
  const auto t0 = Clock::now();
  constexpr int kSeeds = 5;
  double mean[3] = {0, 0, 0};
  std::vector<std::string> first_run_log;
  for (int s = 1; s <= kSeeds; ++s) {
    SynthSpec spec;  // generator defaults are the acceptance corpus settings
    spec.seed = static_cast<std::uint64_t>(s);
    Corpus corpus{spec, generate(spec)};
    RunConfig cfg = ladder_config(static_cast<std::uint64_t>(s));
    const auto rows = ablation_ladder(cfg, corpus);
    for (int i = 0; i < 3; ++i) mean[i] += rows[static_cast<std::size_t>(i)].test_accuracy / kSeeds;
    if (s == 1) {
      std::ifstream log(cfg.out_dir + "/hgf+moa/metrics.jsonl");
      for (std::string line; std::getline(log, line);) first_run_log.push_back(line);
    }
    std::printf("  seed %d: baseline=%s hgf=%s full=%s\n", s,
                fmt(rows[0].test_accuracy).c_str(), fmt(rows[1].test_accuracy).c_str(),
                fmt(rows[2].test_accuracy).c_str());
    std::fflush(stdout);
  }
  const double runtime = seconds_since(t0);
  const bool increasing = mean[0] < mean[1] && mean[1] < mean[2];
  const bool margin_hgf = mean[1] - mean[0] >= 0.05;
  const bool margin_full = mean[2] - mean[1] >= 0.02;
  const bool in_budget = runtime <= 900.0;
  report("ablation ladder trend (baseline < +HGF < +HGF+MoA over 5 seeds)",
         increasing && margin_hgf && margin_full && in_budget,
         "means " + fmt(mean[0]) + " / " + fmt(mean[1]) + " / " + fmt(mean[2]) + ", margins " +
             fmt(mean[1] - mean[0]) + " / " + fmt(mean[2] - mean[1]) + ", runtime " + fmt(runtime) + "s");

  // Trend of the training loss on the first seed's full-mode run: the total
  // loss over the first 10 epochs decreases with at most 2 non-monotone steps.
  int rises = 0;
  double prev = std::numeric_limits<double>::infinity();
  int counted = 0;
  for (const auto& line : first_run_log) {
    const auto j = nlohmann::json::parse(line);
    if (!j.contains("total_loss")) continue;
    const double loss = j["total_loss"].get<double>();
    if (counted > 0 && loss > prev) ++rises;
    prev = loss;
    if (++counted == 10) break;
  }
  report("training loss decreases over the first 10 epochs (<= 2 rises)", counted == 10 && rises <= 2,
         "rises " + std::to_string(rises));
}

// --- criterion 2: gradient suite ---------------------------------------------

void criterion_gradients() {
  const auto t0 = Clock::now();
  const auto results = gradcheck_suite("all", 20);
  const double runtime = seconds_since(t0);
  bool pass = runtime <= 120.0;
  std::string detail;
  for (const auto& r : results) {
    pass = pass && r.pass;
    detail += r.name + " " + fmt(r.max_err / r.tol) + "x-tol; ";
  }
  detail += "runtime " + fmt(runtime) + "s";
  report("gradient suite (composed forwards at 1e-4, primitives at 1e-6; 20 seeds)", pass, detail);
}

// --- criterion 3: routing invariants -----------------------------------------

void criterion_routing() {
  Rng rng(20260809);
  bool pass = true;
  std::string why;
  int checked = 0;
  const int kVectors = 100000;
  for (int rep = 0; rep < kVectors && pass; ++rep) {
    const int e = (rep % 3 == 0) ? 2 : (rep % 3 == 1 ? 4 : 8);
    const int k = 1 + static_cast<int>(rng.uniform_int(0, e - 1));
    Tensor logits({e});
    for (auto& v : logits.values) v = rng.gaussian() * 3.0;
    const auto d = topk_mask_softmax(logits, k);
    double sum = 0;
    int support = 0;
    for (double w : d.weights.values) {
      sum += w;
      support += w > 0 ? 1 : 0;
    }
    if (support > k) { pass = false; why = "support exceeds K"; }
    if (std::abs(sum - 1.0) > 1e-9) { pass = false; why = "weights do not sum to 1"; }
    Tensor shifted = logits;
    const double c = rng.uniform(-5, 5);
    for (auto& v : shifted.values) v += c;
    const auto ds = topk_mask_softmax(shifted, k);
    if (ds.kept != d.kept) { pass = false; why = "kept set not shift invariant"; }
    for (std::size_t i = 0; i < d.weights.values.size(); ++i)
      if (std::abs(ds.weights.values[i] - d.weights.values[i]) > 1e-12) {
        pass = false;
        why = "weights not shift invariant";
      }
    ++checked;
  }
  // Constructed ties: logits drawn from a 3-value alphabet force duplicates;
  // an independent selection oracle (repeated scan preferring lower indices)
  // must agree with the kept set.
  for (int rep = 0; rep < 5000 && pass; ++rep) {
    const int e = 2 + static_cast<int>(rng.uniform_int(0, 6));
    const int k = 1 + static_cast<int>(rng.uniform_int(0, e - 1));
    Tensor logits({e});
    for (auto& v : logits.values) v = static_cast<double>(rng.uniform_int(0, 2));
    std::vector<int> expect;
    std::vector<bool> taken(static_cast<std::size_t>(e), false);
    for (int pick = 0; pick < k; ++pick) {
      int best = -1;
      for (int i = 0; i < e; ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        if (best < 0 || logits.values[static_cast<std::size_t>(i)] > logits.values[static_cast<std::size_t>(best)])
          best = i;  // strict >: the earliest index wins ties
      }
      taken[static_cast<std::size_t>(best)] = true;
      expect.push_back(best);
    }
    std::sort(expect.begin(), expect.end());
    if (topk_keep_set(logits.values, k) != expect) {
      pass = false;
      why = "tie-breaking differs from the lowest-index oracle";
    }
  }
  // Dense equivalence at K = E.
  for (int rep = 0; rep < 5000 && pass; ++rep) {
    const int e = 2 + static_cast<int>(rng.uniform_int(0, 6));
    Tensor logits({e});
    for (auto& v : logits.values) v = rng.gaussian() * 2.0;
    const auto d = topk_mask_softmax(logits, e);
    Tensor plain(logits.shape);
    softmax_span(logits.values, plain.values);
    for (std::size_t i = 0; i < plain.values.size(); ++i)
      if (std::abs(d.weights.values[i] - plain.values[i]) > 1e-12) {
        pass = false;
        why = "K=E differs from the plain softmax";
      }
  }
  report("routing invariants (1e5 random logit vectors; ties; dense equivalence)", pass,
         pass ? std::to_string(checked) + " vectors" : why);
}

// --- criterion 4: load balancing ----------------------------------------------

void criterion_load_balance() {
  Rng rng(4242);
  bool range_ok = true;
  for (int rep = 0; rep < 100000; ++rep) {
    const int e = (rep % 3 == 0) ? 2 : (rep % 3 == 1 ? 4 : 8);
    std::vector<double> u(static_cast<std::size_t>(e));
    double sum = 0;
    for (auto& v : u) {
      v = rng.uniform();
      sum += v;
    }
    for (auto& v : u) v /= sum;
    const double lb = load_balance_value(u);
    if (lb < -1e-12 || lb > std::log(static_cast<double>(e)) + 1e-12) range_ok = false;
  }
  const double at_uniform = load_balance_value(std::vector<double>{0.25, 0.25, 0.25, 0.25});
  const double at_onehot = load_balance_value(std::vector<double>{0, 0, 1, 0});
  const bool fixtures_ok = std::abs(at_uniform) <= 1e-9 && std::abs(at_onehot - std::log(4.0)) <= 1e-9;
  report("load-balancing value range and fixtures (1e5 random usage vectors)", range_ok && fixtures_ok,
         "uniform " + fmt(at_uniform) + ", one-hot " + fmt(at_onehot));

  // Regularizer effect: training with lambda = 0.01 vs 0 on a small corpus,
  // same seed; the worst per-expert usage deviation from uniform must not be
  // larger under the regularizer in at least 4 of 5 seeds.
  int favourable = 0;
  for (int s = 1; s <= 5; ++s) {
    SynthSpec spec;
    spec.dialogues = 80;
    spec.seed = 900 + static_cast<std::uint64_t>(s);
    Corpus corpus{spec, generate(spec)};
    std::array<double, 2> deviation{0, 0};
    for (int variant = 0; variant < 2; ++variant) {
      RunConfig cfg;
      cfg.epochs = 6;
      cfg.lr = 2e-3;
      cfg.seed = static_cast<std::uint64_t>(s);
      cfg.model.lb_weight = variant == 0 ? 0.01 : 0.0;
      cfg.out_dir = out_dir("lb" + std::to_string(s) + "_" + std::to_string(variant));
      TrainResult r = train(cfg, corpus);
      // Final-epoch usage from the training log.
      const auto j = nlohmann::json::parse(r.log_lines.back());
      double worst = 0;
      for (const auto& [pair, usage] : j.at("usage").items()) {
        (void)pair;
        for (const auto& u : usage)
          worst = std::max(worst, std::abs(u.get<double>() - 1.0 / cfg.model.experts));
      }
      deviation[static_cast<std::size_t>(variant)] = worst;
    }
    if (deviation[0] <= deviation[1] + 1e-12) ++favourable;
    std::printf("  lb seed %d: max|u-1/E| %.4f (lambda 0.01) vs %.4f (lambda 0)\n", s, deviation[0], deviation[1]);
  }
  report("load-balancing regularizer keeps usage closer to uniform (>= 4 of 5 seeds)", favourable >= 4,
         std::to_string(favourable) + " of 5 seeds");
}

// --- criterion 5: gate bounds --------------------------------------------------

void criterion_hgf_bounds() {
  Rng rng(555);
  bool pass = true;
  for (int rep = 0; rep < 10000 && pass; ++rep) {
    const int l = 1 + static_cast<int>(rng.uniform_int(0, 3));
    const int dim = 1 + static_cast<int>(rng.uniform_int(0, 5));
    Tensor content({l, dim}), hotspot({l, dim}), w({2 * dim, 1}), b({1, 1});
    for (auto& v : content.values) v = rng.gaussian() * 2;
    for (auto& v : hotspot.values) v = rng.gaussian() * 2;
    for (auto& v : w.values) v = rng.gaussian();
    b.values[0] = rng.gaussian();
    Tape tape;
    GateResult g = hgf_gate_vars(tape.constant(content), tape.constant(hotspot), tape.constant(w),
                                 tape.constant(b));
    const Tensor& z = g.fused.val();
    for (int t = 0; t < l && pass; ++t)
      for (int j = 0; j < dim; ++j) {
        const double lo = std::min(content.at(t, j), hotspot.at(t, j));
        const double hi = std::max(content.at(t, j), hotspot.at(t, j));
        if (z.at(t, j) < lo || z.at(t, j) > hi) pass = false;
      }
  }
  // Exact pass-through when hotspot equals content.
  Tensor same({3, 4}), w({8, 1}), b({1, 1});
  for (auto& v : same.values) v = rng.gaussian();
  for (auto& v : w.values) v = rng.gaussian() * 4;
  b.values[0] = rng.gaussian();
  Tape tape;
  GateResult g = hgf_gate_vars(tape.constant(same), tape.constant(same), tape.constant(w), tape.constant(b));
  const bool exact = g.fused.val().values == same.values;
  report("gate output stays inside the content/hotspot envelope (1e4 random triples)", pass && exact,
         exact ? "incl. exact pass-through at H == C" : "H == C not exact");
}

// --- criterion 6: graph oracle -------------------------------------------------

std::set<std::tuple<int, int, int, int, int>> brute_force_edges(int length, const GraphConfig& cfg) {
  std::set<std::tuple<int, int, int, int, int>> out;
  for (int ms = 0; ms < cfg.modalities; ++ms)
    for (int ts = 0; ts < length; ++ts)
      for (int md = 0; md < cfg.modalities; ++md)
        for (int td = 0; td < length; ++td) {
          const int src = ms * length + ts, dst = md * length + td;
          if (src == dst) continue;
          if (ms == md) {
            const int delta = td - ts;
            if (delta > 0 && delta <= cfg.window_past) out.insert({src, dst, +1, ms, md});
            if (delta < 0 && -delta <= cfg.window_future) out.insert({src, dst, -1, ms, md});
          } else if (cfg.cross_modal && ts == td) {
            out.insert({src, dst, 0, ms, md});
          }
        }
  return out;
}

void criterion_graph() {
  Rng rng(606);
  bool edges_ok = true;
  for (int rep = 0; rep < 200 && edges_ok; ++rep) {
    GraphConfig cfg;
    cfg.modalities = static_cast<int>(rng.uniform_int(2, 3));
    cfg.window_past = static_cast<int>(rng.uniform_int(0, 6));
    cfg.window_future = static_cast<int>(rng.uniform_int(0, 6));
    cfg.cross_modal = rng.uniform() < 0.5;
    const int length = static_cast<int>(rng.uniform_int(1, 10));
    const TypedEdgeList g = build_graph(length, cfg);
    std::set<std::tuple<int, int, int, int, int>> got;
    for (const TypedEdge& e : g.edges) {
      const Relation& r = g.relations[static_cast<std::size_t>(e.relation)];
      got.insert({e.src, e.dst, r.direction, r.src_mod, r.dst_mod});
    }
    if (got != brute_force_edges(length, cfg) || got.size() != g.edges.size()) edges_ok = false;
  }
  report("graph construction matches brute-force enumeration (200 random settings)", edges_ok, "exact");

  // Dense-adjacency oracle for the message passing.
  bool rgnn_ok = true;
  double worst = 0;
  for (int rep = 0; rep < 50 && rgnn_ok; ++rep) {
    GraphConfig cfg;
    cfg.window_past = static_cast<int>(rng.uniform_int(0, 3));
    cfg.window_future = static_cast<int>(rng.uniform_int(0, 3));
    cfg.cross_modal = rng.uniform() < 0.7;
    cfg.layers = 2;
    const int length = static_cast<int>(rng.uniform_int(1, 10));
    GraphPlan plan = GraphPlan::make(build_graph(length, cfg));
    const int n = plan.list.node_count();
    const int width = 6;
    ParamStore ps;
    Rng init = rng.derive(static_cast<std::uint64_t>(rep));
    RgnnParams params = make_rgnn(ps, "g", static_cast<int>(plan.list.relations.size()), width, 2, init);
    Tensor x({n, width});
    for (auto& v : x.values) v = rng.gaussian();
    Tape tape;
    Binding bind(tape, ps);
    const Tensor& fast = rgnn_forward(tape.constant(x), plan, params, bind).val();

    // Dense evaluation with plain loops.
    auto layer = [&](const std::vector<std::vector<double>>& h, const RgnnLayerParams& lp, bool act) {
      std::vector<std::vector<double>> next(static_cast<std::size_t>(n),
                                            std::vector<double>(static_cast<std::size_t>(width), 0.0));
      const Tensor& ws = ps.tensor(lp.self_weight);
      for (int v = 0; v < n; ++v)
        for (int j = 0; j < width; ++j)
          for (int i = 0; i < width; ++i)
            next[static_cast<std::size_t>(v)][static_cast<std::size_t>(j)] +=
                h[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)] * ws.at(i, j);
      for (std::size_t r = 0; r < plan.list.relations.size(); ++r) {
        std::vector<std::vector<double>> adj(static_cast<std::size_t>(n),
                                             std::vector<double>(static_cast<std::size_t>(n), 0.0));
        std::vector<int> indeg(static_cast<std::size_t>(n), 0);
        for (const TypedEdge& e : plan.list.edges)
          if (e.relation == static_cast<int>(r)) {
            adj[static_cast<std::size_t>(e.dst)][static_cast<std::size_t>(e.src)] = 1.0;
            ++indeg[static_cast<std::size_t>(e.dst)];
          }
        const Tensor& wr = ps.tensor(lp.rel_weights[r]);
        for (int v = 0; v < n; ++v) {
          if (!indeg[static_cast<std::size_t>(v)]) continue;
          std::vector<double> pooled(static_cast<std::size_t>(width), 0.0);
          for (int u = 0; u < n; ++u)
            if (adj[static_cast<std::size_t>(v)][static_cast<std::size_t>(u)] > 0)
              for (int i = 0; i < width; ++i)
                pooled[static_cast<std::size_t>(i)] += h[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)];
          for (auto& p : pooled) p /= indeg[static_cast<std::size_t>(v)];
          for (int j = 0; j < width; ++j)
            for (int i = 0; i < width; ++i)
              next[static_cast<std::size_t>(v)][static_cast<std::size_t>(j)] +=
                  pooled[static_cast<std::size_t>(i)] * wr.at(i, j);
        }
      }
      if (act)
        for (auto& row : next)
          for (auto& v : row) v = v > 0 ? v : 0;
      return next;
    };
    std::vector<std::vector<double>> h(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v)
      for (int j = 0; j < width; ++j) h[static_cast<std::size_t>(v)].push_back(x.at(v, j));
    h = layer(h, params.layers[0], true);
    h = layer(h, params.layers[1], false);
    for (int v = 0; v < n; ++v)
      for (int j = 0; j < width; ++j) {
        const double diff = std::abs(fast.at(v, j) - h[static_cast<std::size_t>(v)][static_cast<std::size_t>(j)]);
        worst = std::max(worst, diff);
        if (diff > 1e-10) rgnn_ok = false;
      }
  }
  report("message passing matches the dense-adjacency oracle (50 graphs <= 30 nodes)", rgnn_ok,
         "worst |diff| " + fmt(worst * 1e10) + "e-10");
}

// --- criterion 7: metrics oracle ----------------------------------------------

void criterion_metrics() {
  Rng rng(707);
  bool pass = true;
  for (int rep = 0; rep < 1000 && pass; ++rep) {
    const int classes = 2 + static_cast<int>(rng.uniform_int(0, 5));
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 60));
    std::vector<int> truth, pred;
    for (int i = 0; i < n; ++i) {
      truth.push_back(static_cast<int>(rng.uniform_int(0, classes - 1)));
      pred.push_back(static_cast<int>(rng.uniform_int(0, classes - 1)));
    }
    const MetricsReport r = metrics(pred, truth, classes);
    // Counting oracle.
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += pred[i] == truth[i];
    double wf1 = 0;
    for (int k = 0; k < classes; ++k) {
      std::int64_t tp = 0, fp = 0, fn = 0, support = 0;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        support += truth[i] == k;
        tp += pred[i] == k && truth[i] == k;
        fp += pred[i] == k && truth[i] != k;
        fn += pred[i] != k && truth[i] == k;
      }
      const double f1 = (2 * tp + fp + fn) > 0 ? 2.0 * tp / static_cast<double>(2 * tp + fp + fn) : 0.0;
      wf1 += (static_cast<double>(support) / n) * f1;
    }
    if (r.accuracy != static_cast<double>(correct) / n) pass = false;
    if (std::abs(r.weighted_f1 - wf1) > 1e-13) pass = false;
  }
  const MetricsReport fixture = metrics(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 0, 0, 1}, 2);
  const bool fixture_ok = std::abs(fixture.weighted_f1 - 0.7666666666666667) <= 1e-9 && fixture.accuracy == 0.75;
  report("metrics match the counting oracle (1000 random label vectors + fixture)", pass && fixture_ok,
         "w-F1 fixture " + fmt(fixture.weighted_f1));
}

// --- criterion 8: reproducibility -----------------------------------------------

void criterion_reproducibility() {
  SynthSpec spec;
  spec.dialogues = 40;
  spec.seed = 321;
  Corpus corpus{spec, generate(spec)};
  RunConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  cfg.out_dir = out_dir("repro_a");
  TrainResult a = train(cfg, corpus);
  std::ifstream fa(a.log_path, std::ios::binary);
  const std::string log_a((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  cfg.out_dir = out_dir("repro_b");
  TrainResult b = train(cfg, corpus);
  std::ifstream fb(b.log_path, std::ios::binary);
  const std::string log_b((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  const bool logs_equal = !log_a.empty() && log_a == log_b;

  const MetricsReport in_memory = evaluate(a.best, corpus, "test");
  const Checkpoint loaded = load_checkpoint(a.checkpoint_path);
  const MetricsReport from_disk = evaluate(loaded, corpus, "test");
  const bool ckpt_ok = in_memory.accuracy == from_disk.accuracy &&
                       in_memory.weighted_f1 == from_disk.weighted_f1 &&
                       in_memory.confusion == from_disk.confusion;
  report("reproducibility (byte-identical logs; checkpoint round-trip)", logs_equal && ckpt_ok,
         std::string(logs_equal ? "logs identical" : "logs differ") + ", " +
             (ckpt_ok ? "round-trip exact" : "round-trip differs"));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  criterion_gradients();
  criterion_routing();
  criterion_load_balance();
  criterion_hgf_bounds();
  criterion_graph();
  criterion_metrics();
  criterion_reproducibility();
  criterion_ladder();
  std::printf("%s: %d criterion failure(s), total %.1fs\n", g_failures == 0 ? "OK" : "FAILED", g_failures,
              seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
