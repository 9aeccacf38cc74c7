// SPDX-License-Identifier: Apache-2.0
// Finite-difference suite over the training losses of a miniature model.
#pragma once

#include <string>

namespace ram::acceptance {

struct SuiteResult {
  bool pass = false;
  double worst_error = 0;
  std::string detail;
};

SuiteResult run_grad_suite();

}  // namespace ram::acceptance
