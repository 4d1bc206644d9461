// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#include "hfl/metrics.hpp"

#include <string>

namespace hfl {

MetricsReport metrics(std::span<const int> predicted, std::span<const int> truth, int classes) {
  if (predicted.size() != truth.size()) throw Error("metrics: prediction/label length mismatch");
  if (predicted.empty()) throw Error("metrics: empty label set");
  MetricsReport r;
  r.classes = classes;
  r.confusion.assign(static_cast<std::size_t>(classes),
                     std::vector<std::int64_t>(static_cast<std::size_t>(classes), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || t >= classes || p < 0 || p >= classes)
      throw Error("metrics: label " + std::to_string(t < 0 || t >= classes ? t : p) + " outside [0, " +
                  std::to_string(classes) + ")");
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  const double total = static_cast<double>(truth.size());
  std::int64_t correct = 0;
  r.per_class_f1.assign(static_cast<std::size_t>(classes), 0.0);
  r.freq.assign(static_cast<std::size_t>(classes), 0.0);
  for (int k = 0; k < classes; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    std::int64_t tp = r.confusion[ks][ks], row = 0, col = 0;
    for (int j = 0; j < classes; ++j) {
      row += r.confusion[ks][static_cast<std::size_t>(j)];     // true = k
      col += r.confusion[static_cast<std::size_t>(j)][ks];     // pred = k
    }
    correct += tp;
    const double precision = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    const double recall = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    r.per_class_f1[ks] =
        (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    r.freq[ks] = static_cast<double>(row) / total;
    r.weighted_f1 += r.freq[ks] * r.per_class_f1[ks];
  }
  r.accuracy = static_cast<double>(correct) / total;
  return r;
}

}  // namespace hfl
