// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "hfl/common.hpp"

namespace hfl {

// Confusion-matrix-based classification metrics. w-F1 weights each class F1
// by the class frequency in the true labels.
struct MetricsReport {
  int classes = 0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][pred]
  std::vector<double> per_class_f1;
  std::vector<double> freq;  // relative frequency of true labels
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
};

// 0/0 ratios (precision, recall, F1 of absent classes) resolve to 0.
MetricsReport metrics(std::span<const int> predicted, std::span<const int> truth, int classes);

}  // namespace hfl
