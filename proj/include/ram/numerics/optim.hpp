// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "ram/numerics/tape.hpp"

namespace ram {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW)
  double grad_clip = 0.0;     // global L2 norm clip; 0 disables
};

/// Adam with decoupled weight decay. Moments are keyed by parameter name.
class Adam {
 public:
  struct Moments {
    Tensor m;
    Tensor v;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One update of every parameter in `params`; parameters without a gradient
  /// still receive a zero-gradient update (moment decay, weight decay).
  void step(std::span<Parameter* const> params, const Gradients& grads);

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::int64_t steps() const { return steps_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

  /// Restores serialized state.
  void restore(std::int64_t steps, std::map<std::string, Moments> moments) {
    steps_ = steps;
    moments_ = std::move(moments);
  }

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace ram
