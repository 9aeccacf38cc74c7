// SPDX-License-Identifier: Apache-2.0
#include "ram/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ram {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "cosine") return ScheduleKind::cosine;
  if (name == "linear") return ScheduleKind::linear;
  throw std::invalid_argument("unknown schedule kind '" + name + "'");
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::cosine ? "cosine" : "linear"; }

NoiseSchedule make_schedule(ScheduleKind kind, int steps) {
  if (steps < 2) throw std::invalid_argument("make_schedule: need at least 2 steps, got " + std::to_string(steps));
  NoiseSchedule s;
  s.kind = kind;
  s.steps = steps;
  s.beta.resize(static_cast<std::size_t>(steps));
  const double T = steps;
  if (kind == ScheduleKind::linear) {
    for (int t = 0; t < steps; ++t) s.beta[t] = kLinearBetaStart + (kLinearBetaEnd - kLinearBetaStart) * t / (T - 1);
  } else {
    auto f = [&](double t) {
      const double c = std::cos((t / T + kCosineOffset) / (1.0 + kCosineOffset) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int t = 0; t < steps; ++t) s.beta[t] = std::min(1.0 - f(t + 1) / f(t), kCosineMaxBeta);
  }
  s.alpha.resize(s.beta.size());
  s.alpha_bar.resize(s.beta.size());
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    s.alpha[t] = 1.0 - s.beta[t];
    prod *= s.alpha[t];
    s.alpha_bar[t] = prod;
  }
  return s;
}

NoiseSchedule make_schedule(const std::string& kind, int steps) { return make_schedule(parse_schedule_kind(kind), steps); }

RespacingPlan make_respacing(int steps, int n_steps) {
  if (n_steps < 1 || n_steps > steps) {
    throw std::invalid_argument("make_respacing: n_steps " + std::to_string(n_steps) + " outside [1, " +
                                std::to_string(steps) + "]");
  }
  RespacingPlan plan;
  if (n_steps == 1) {
    plan.indices = {0};
    return plan;
  }
  // Spacing is at least one step, so rounding never merges neighbours.
  const double stride = static_cast<double>(steps - 1) / (n_steps - 1);
  for (int i = n_steps - 1; i >= 0; --i) plan.indices.push_back(static_cast<int>(std::round(i * stride)));
  return plan;
}

namespace {

void check_rows(const char* op, const Tensor& x, std::span<const std::uint8_t> mask, std::int64_t row_width) {
  if (mask.empty()) return;
  if (row_width <= 0 || static_cast<std::int64_t>(mask.size()) * row_width != x.numel()) {
    throw ShapeError(std::string(op) + ": mask of " + std::to_string(mask.size()) + " rows does not cover " +
                     shape_str(x.shape()));
  }
}

void apply_mask(Tensor& x, std::span<const std::uint8_t> mask, std::int64_t row_width) {
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (mask[r]) continue;
    std::fill_n(x.ptr() + static_cast<std::int64_t>(r) * row_width, row_width, Real(0));
  }
}

}  // namespace

Tensor noise(const NoiseSchedule& schedule, const Tensor& x0, int t, const Tensor& eps,
             std::span<const std::uint8_t> mask, std::int64_t row_width) {
  if (t < 0 || t >= schedule.steps) {
    throw std::out_of_range("noise: timestep " + std::to_string(t) + " outside [0, " + std::to_string(schedule.steps) +
                            ")");
  }
  if (x0.shape() != eps.shape()) {
    throw ShapeError("noise: x0 " + shape_str(x0.shape()) + " vs eps " + shape_str(eps.shape()));
  }
  check_rows("noise", x0, mask, row_width);
  const double a = std::sqrt(schedule.alpha_bar[t]);
  const double b = std::sqrt(1.0 - schedule.alpha_bar[t]);
  Tensor out(x0.shape());
  for (std::int64_t i = 0; i < x0.numel(); ++i) out[i] = static_cast<Real>(a * x0[i] + b * eps[i]);
  apply_mask(out, mask, row_width);
  return out;
}

PosteriorCoefficients posterior_coefficients(double abar_from, double abar_to) {
  PosteriorCoefficients c;
  const double alpha = abar_from / abar_to;  // respaced per-step alpha
  const double beta = 1.0 - alpha;
  const double denom = 1.0 - abar_from;
  if (denom <= 0.0) {
    c.coef_xt = 1.0;
    return c;
  }
  c.coef_x0 = std::sqrt(abar_to) * beta / denom;
  c.coef_xt = std::sqrt(alpha) * (1.0 - abar_to) / denom;
  c.variance = std::max(0.0, beta * (1.0 - abar_to) / denom);
  return c;
}

Tensor posterior_from_alpha_bars(const Tensor& x_from, const Tensor& x0_hat, double abar_from, double abar_to,
                                 const Tensor& z) {
  if (x_from.shape() != x0_hat.shape() || x_from.shape() != z.shape()) {
    throw ShapeError("posterior_step: " + shape_str(x_from.shape()) + " vs " + shape_str(x0_hat.shape()));
  }
  const PosteriorCoefficients c = posterior_coefficients(abar_from, abar_to);
  const double sd = std::sqrt(c.variance);
  Tensor out(x_from.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out[i] = static_cast<Real>(c.coef_x0 * x0_hat[i] + c.coef_xt * x_from[i] + sd * z[i]);
  }
  return out;
}

Tensor posterior_step(const NoiseSchedule& schedule, const Tensor& x_from, const Tensor& x0_hat, int from_t, int to_t,
                      Rng& rng, std::span<const std::uint8_t> mask, std::int64_t row_width) {
  if (from_t < 0 || from_t >= schedule.steps) {
    throw std::out_of_range("posterior_step: timestep " + std::to_string(from_t) + " out of range");
  }
  if (to_t == kTerminal) return x0_hat;
  if (to_t < 0 || to_t >= from_t) {
    throw std::invalid_argument("posterior_step: step pair " + std::to_string(from_t) + " -> " +
                                std::to_string(to_t) + " is not decreasing");
  }
  check_rows("posterior_step", x_from, mask, row_width);
  Tensor z(x_from.shape());
  for (auto& v : z.data()) v = static_cast<Real>(rng.normal());
  Tensor out = posterior_from_alpha_bars(x_from, x0_hat, schedule.alpha_bar[from_t], schedule.alpha_bar[to_t], z);
  apply_mask(out, mask, row_width);
  return out;
}

}  // namespace ram
