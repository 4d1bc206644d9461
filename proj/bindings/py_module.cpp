// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Python bindings over the main operations: corpus generation and IO, gated
// fusion, TopK routing, load balancing, graph construction, metrics,
// training, evaluation and the gradient-check suites.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hfl/checks.hpp"
#include "hfl/train.hpp"

namespace py = pybind11;

namespace {

std::string dict_to_json_text(const py::dict& d) {
  return py::module_::import("json").attr("dumps")(d).cast<std::string>();
}

hfl::Tensor matrix_from_rows(const std::vector<std::vector<double>>& rows) {
  return hfl::Tensor::from_rows(rows);
}

std::vector<std::vector<double>> matrix_to_rows(const hfl::Tensor& t) {
  std::vector<std::vector<double>> out;
  for (int i = 0; i < t.rows(); ++i) {
    std::vector<double> row;
    for (int j = 0; j < t.cols(); ++j) row.push_back(t.at(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

py::dict metrics_to_dict(const hfl::MetricsReport& r) {
  py::dict d;
  d["accuracy"] = r.accuracy;
  d["w_f1"] = r.weighted_f1;
  d["per_class_f1"] = r.per_class_f1;
  d["freq"] = r.freq;
  d["confusion"] = r.confusion;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "hotspot-gated fusion / mixture-of-aligners conversation classifier";

  py::register_exception<hfl::Error>(m, "HflError");

  py::class_<hfl::Corpus>(m, "Corpus")
      .def("__len__", [](const hfl::Corpus& c) { return c.samples.size(); })
      .def_property_readonly("classes", [](const hfl::Corpus& c) { return c.spec.classes; })
      .def("labels",
           [](const hfl::Corpus& c, int i) { return c.samples.at(static_cast<std::size_t>(i)).labels; })
      .def("save", [](const hfl::Corpus& c, const std::string& path) { hfl::write_corpus(c.spec, c.samples, path); });

  m.def("generate", [](const py::dict& spec) {
    hfl::Corpus c;
    c.spec = hfl::synth_spec_from_json_text(dict_to_json_text(spec));
    c.samples = hfl::generate(c.spec);
    return c;
  });

  m.def("read_corpus", &hfl::read_corpus);

  m.def("content_rule_accuracy",
        [](const hfl::Corpus& c) { return hfl::content_rule_accuracy(c.spec, c.samples); });
  m.def("hotspot_rule_accuracy",
        [](const hfl::Corpus& c) { return hfl::hotspot_rule_accuracy(c.spec, c.samples); });

  m.def("topk_mask_softmax", [](const std::vector<double>& logits, int k) {
    const auto d = hfl::topk_mask_softmax(hfl::Tensor::vec(std::vector<double>(logits)), k);
    return py::make_tuple(d.weights.values, d.kept);
  });

  m.def("load_balance", [](const std::vector<double>& usage) {
    return hfl::load_balance_value(std::span<const double>(usage.data(), usage.size()));
  });

  m.def("hgf_gate", [](const std::vector<std::vector<double>>& content,
                       const std::vector<std::vector<double>>& hotspot,
                       const std::vector<std::vector<double>>& weight, double bias) {
    hfl::Tape tape;
    hfl::GateResult g =
        hfl::hgf_gate_vars(tape.constant(matrix_from_rows(content)), tape.constant(matrix_from_rows(hotspot)),
                           tape.constant(matrix_from_rows(weight)), tape.constant(hfl::Tensor::scalar(bias)));
    return py::make_tuple(matrix_to_rows(g.fused.val()), matrix_to_rows(g.alpha.val()));
  });

  m.def(
      "build_graph",
      [](int length, int window_past, int window_future, bool cross_modal) {
        hfl::GraphConfig cfg;
        cfg.window_past = window_past;
        cfg.window_future = window_future;
        cfg.cross_modal = cross_modal;
        const hfl::TypedEdgeList g = hfl::build_graph(length, cfg);
        py::dict d;
        std::vector<std::string> rels;
        for (const auto& r : g.relations) rels.push_back(hfl::relation_name(r));
        std::vector<std::tuple<int, int, int>> edges;
        for (const auto& e : g.edges) edges.emplace_back(e.src, e.dst, e.relation);
        d["length"] = g.length;
        d["modalities"] = g.modalities;
        d["relations"] = rels;
        d["edges"] = edges;
        return d;
      },
      py::arg("length"), py::arg("window_past") = 4, py::arg("window_future") = 4, py::arg("cross_modal") = true);

  m.def("metrics", [](const std::vector<int>& pred, const std::vector<int>& truth, int classes) {
    return metrics_to_dict(hfl::metrics(pred, truth, classes));
  });

  m.def("train", [](const py::dict& config) {
    const hfl::RunConfig cfg = hfl::run_config_from_json_text(dict_to_json_text(config));
    const hfl::TrainResult r = hfl::train(cfg);
    py::dict d;
    d["checkpoint"] = r.checkpoint_path;
    d["log"] = r.log_path;
    d["best_epoch"] = r.best.epoch;
    d["best_dev_accuracy"] = r.best.dev_accuracy;
    d["best_dev_w_f1"] = r.best.dev_weighted_f1;
    d["log_lines"] = r.log_lines;
    return d;
  });

  m.def("evaluate", [](const std::string& ckpt_path, const std::string& data_path, const std::string& split) {
    const hfl::Checkpoint ckpt = hfl::load_checkpoint(ckpt_path);
    const hfl::Corpus corpus = hfl::read_corpus(data_path);
    return metrics_to_dict(hfl::evaluate(ckpt, corpus, split));
  });

  m.def(
      "gradcheck",
      [](const std::string& module, int seeds) {
        std::vector<py::dict> out;
        for (const auto& r : hfl::gradcheck_suite(module, seeds)) {
          py::dict d;
          d["suite"] = r.name;
          d["pass"] = r.pass;
          d["max_rel_err"] = r.max_err;
          d["tol"] = r.tol;
          out.push_back(d);
        }
        return out;
      },
      py::arg("module") = "all", py::arg("seeds") = 3);
}
