// SPDX-License-Identifier: Apache-2.0
// Central finite differences against Tape::backward.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ram/numerics/tape.hpp"

namespace ram::testing {

#ifdef RAM_REAL_DOUBLE
inline constexpr double kGradTol = 1e-4;
#else
inline constexpr double kGradTol = 1e-2;
#endif

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  double global_rel_error = 0.0;
  /// Per-tensor error in double; in float, tensors whose true gradient is near zero
  /// are dominated by difference noise, so the error over all tensors is used.
  double error() const {
#ifdef RAM_REAL_DOUBLE
    return max_rel_error;
#else
    return global_rel_error;
#endif
  }
};

using LossFn = std::function<Var(Tape&)>;

inline double eval_loss(const LossFn& fn) {
  Tape tape(Tape::Mode::no_grad);
  return static_cast<double>(fn(tape).value().item());
}

/// Relative error per parameter tensor, ||analytic - numeric|| / max(||analytic||, ||numeric||, floor).
inline GradCheck grad_check(const std::vector<Parameter*>& params, const LossFn& fn, double h = 1e-3,
                            double floor = 1e-6) {
  Gradients grads;
  {
    Tape tape;
    grads = tape.backward(fn(tape));
  }
  GradCheck out;
  double total_diff = 0, total_a = 0, total_n = 0;
  for (Parameter* p : params) {
    const Tensor analytic = grads.of(*p);
    double diff = 0, na = 0, nn = 0;
    for (std::int64_t i = 0; i < p->value.numel(); ++i) {
      const Real saved = p->value[i];
      p->value[i] = static_cast<Real>(saved + h);
      const double up = eval_loss(fn);
      p->value[i] = static_cast<Real>(saved - h);
      const double down = eval_loss(fn);
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i];
      diff += (a - numeric) * (a - numeric);
      na += a * a;
      nn += numeric * numeric;
    }
    total_diff += diff;
    total_a += na;
    total_n += nn;
    const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
    if (rel >= out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst = p->name;
    }
  }
  out.global_rel_error = std::sqrt(total_diff) / std::max({std::sqrt(total_a), std::sqrt(total_n), floor});
  return out;
}

}  // namespace ram::testing
