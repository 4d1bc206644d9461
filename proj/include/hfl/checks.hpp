// Copyright (c) 2026 The hfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference verification suites over the composed forward passes,
// shared by the `gradcheck` CLI subcommand and the acceptance harness.
#pragma once

#include <string>
#include <vector>

#include "hfl/tensor.hpp"

namespace hfl {

struct SuiteResult {
  std::string name;
  bool pass = false;
  double max_err = 0.0;
  double tol = 0.0;
  int checks = 0;
};

// module: all | primitives | hgf | moa | graph | model.
// Each suite runs `seeds` seeded instances and reports the worst error.
std::vector<SuiteResult> gradcheck_suite(const std::string& module, int seeds);

}  // namespace hfl
