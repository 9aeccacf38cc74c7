// SPDX-License-Identifier: Apache-2.0
// Noise schedules, the closed-form forward marginal, respaced inference plans,
// and the x0-parameterized reverse transition.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ram/numerics/rng.hpp"
#include "ram/numerics/tensor.hpp"

namespace ram {

enum class ScheduleKind { cosine, linear };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::cosine;
  int steps = 0;                  // T_train
  std::vector<double> beta;       // beta[t], t in [0, steps)
  std::vector<double> alpha;      // 1 - beta[t]
  std::vector<double> alpha_bar;  // prod_{s<=t} alpha[s]
};

inline constexpr double kLinearBetaStart = 1e-4;
inline constexpr double kLinearBetaEnd = 0.02;
inline constexpr double kCosineOffset = 0.008;
inline constexpr double kCosineMaxBeta = 0.999;

NoiseSchedule make_schedule(ScheduleKind kind, int steps);
NoiseSchedule make_schedule(const std::string& kind, int steps);

/// Strictly decreasing training-step indices visited at inference; ends at 0.
struct RespacingPlan {
  std::vector<int> indices;
};

/// n_steps indices linearly spaced over [0, steps-1], rounded half away from
/// zero, returned descending. A single step plan is {0}.
RespacingPlan make_respacing(int steps, int n_steps);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, applied to valid frames only;
/// frames with mask 0 are written as zero. `mask` has one flag per row of
/// `row_width` values and may be empty (all valid).
Tensor noise(const NoiseSchedule& schedule, const Tensor& x0, int t, const Tensor& eps,
             std::span<const std::uint8_t> mask = {}, std::int64_t row_width = 0);

/// Marker for the transition out of the last inference index.
inline constexpr int kTerminal = -1;

/// Gaussian posterior q(x_to | x_from, x0_hat) of the respaced chain with
/// alpha = abar_from / abar_to. Returns x0_hat unchanged when to_t is kTerminal.
Tensor posterior_step(const NoiseSchedule& schedule, const Tensor& x_from, const Tensor& x0_hat, int from_t, int to_t,
                      Rng& rng, std::span<const std::uint8_t> mask = {}, std::int64_t row_width = 0);

struct PosteriorCoefficients {
  double coef_x0 = 0;
  double coef_xt = 0;
  double variance = 0;
};

/// Posterior coefficients between two cumulative products (abar_from <= abar_to).
PosteriorCoefficients posterior_coefficients(double abar_from, double abar_to);

/// Same transition written in terms of explicit cumulative products and a
/// caller-supplied standard-normal draw.
Tensor posterior_from_alpha_bars(const Tensor& x_from, const Tensor& x0_hat, double abar_from, double abar_to,
                                 const Tensor& z);

}  // namespace ram
