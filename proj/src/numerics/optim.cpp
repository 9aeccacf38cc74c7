// SPDX-License-Identifier: Apache-2.0
#include "ram/numerics/optim.hpp"

#include <cmath>
#include <vector>

namespace ram {

void Adam::step(std::span<Parameter* const> params, const Gradients& grads) {
  ++steps_;
  std::vector<Tensor> g;
  g.reserve(params.size());
  double sq = 0.0;
  for (Parameter* p : params) {
    g.push_back(grads.of(*p));
    for (Real v : g.back().data()) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  double clip = 1.0;
  if (config_.grad_clip > 0.0) {
    const double nrm = std::sqrt(sq);
    if (nrm > config_.grad_clip) clip = config_.grad_clip / nrm;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    auto [it, fresh] = moments_.try_emplace(p.name);
    if (fresh) it->second = Moments{Tensor(p.value.shape()), Tensor(p.value.shape())};
    Tensor& m = it->second.m;
    Tensor& v = it->second.v;
    for (std::int64_t k = 0; k < p.value.numel(); ++k) {
      const double gk = static_cast<double>(g[i][k]) * clip;
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<Real>(mk);
      v[k] = static_cast<Real>(vk);
      double w = p.value[k];
      w -= config_.lr * config_.weight_decay * w;
      w -= config_.lr * (mk / c1) / (std::sqrt(vk / c2) + config_.eps);
      p.value[k] = static_cast<Real>(w);
    }
  }
}

}  // namespace ram
