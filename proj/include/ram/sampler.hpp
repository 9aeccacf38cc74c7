// SPDX-License-Identifier: Apache-2.0
// Respaced ancestral sampling with reconstructive and classifier-free guidance.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ram/model/networks.hpp"
#include "ram/schedule.hpp"

namespace ram {

struct GuidanceConfig {
  double w1 = 5.0;              // reconstructive guidance
  double w2 = 1.5;              // classifier-free guidance
  std::vector<int> reg_steps;   // training timesteps with reconstructive guidance
  RespacingPlan respacing;
  double clamp = 0.0;           // |x0_hat| bound in normalized units; 0 disables

  /// Throws std::invalid_argument when reg_steps leaves the plan or holds its first index.
  void validate() const;
  bool reg_active(int t) const;
};

/// Default plan and every index but the first.
GuidanceConfig default_guidance(int train_steps = 50, int n_steps = 20);

std::vector<int> reg_steps_all(const RespacingPlan& plan);
/// The first k indices after the initial one.
std::vector<int> reg_steps_early(const RespacingPlan& plan, int k);
/// "none", "all" or "early:K".
std::vector<int> parse_reg_steps(const std::string& spec, const RespacingPlan& plan);

/// c + w1 (c - r) + w2 (c - u), elementwise in double. `rec` and `uncond` may
/// be null when their weight is zero.
Tensor combine_guidance(const Tensor& cond, const Tensor* rec, const Tensor* uncond, double w1, double w2);

struct SampleTrace;

/// Carried between steps of one batch of samples.
struct SamplerState {
  std::optional<Tensor> prev_estimate;  // x0_hat of the previous step, [N, L, d]
  std::optional<Tensor> prev_latent;    // E_m(prev_estimate), [N, d_E]
};

/// Networks the guidance rule calls. denoise maps (x_t [N,L,d], t per row,
/// z [N,d_E], frame mask) to x0 predictions; encode maps x0 [N,L,d] to [N,d_E].
struct GuidanceModels {
  std::function<Tensor(const Tensor& x_t, std::span<const int> t, const Tensor& z, std::span<const std::uint8_t> mask)>
      denoise;
  std::function<Tensor(const Tensor& x0, std::span<const std::uint8_t> mask)> encode;
};

/// Inference-mode wrappers; tape sizes are noted in `trace` when given.
GuidanceModels guidance_models(const ModelBundle& model, SampleTrace* trace = nullptr);

/// Guided x0 estimate with all branches stacked into one denoiser call.
Tensor guided_estimate(const GuidanceModels& models, const Tensor& x_t, int t, const Tensor& z_cond,
                       std::span<const std::uint8_t> mask, SamplerState& state, const GuidanceConfig& cfg,
                       SampleTrace* trace = nullptr);

/// Guided x0 estimate for a batch of N rows at a common timestep. z_cond is
/// [N, d_E]. When reconstructive guidance is active and state has no cached
/// latent, it is computed from prev_estimate and stored.
Tensor guided_estimate(const ModelBundle& model, const Tensor& x_t, int t, const Tensor& z_cond,
                       std::span<const std::uint8_t> mask, SamplerState& state, const GuidanceConfig& cfg,
                       SampleTrace* trace = nullptr);

struct SampleRequest {
  ActionScript script;
  int length = 0;
  std::uint64_t seed = 0;
};

/// Counters from one sampling run.
struct SampleTrace {
  int steps = 0;
  std::int64_t denoiser_rows = 0;    // sequences passed through D
  std::int64_t encoder_rows = 0;     // sequences passed through E_m
  std::size_t max_tape_nodes = 0;    // largest per-step tape
  std::size_t recorded_ops = 0;      // backward closures recorded (0 for inference)
};

/// Samples all requests in lockstep. Each row depends only on its own request,
/// so the result equals sampling every request alone.
std::vector<MotionSequence> sample_many(const ModelBundle& model, std::span<const SampleRequest> requests,
                                        const NoiseSchedule& schedule, const GuidanceConfig& cfg, int fps,
                                        SampleTrace* trace = nullptr);

MotionSequence sample(const ModelBundle& model, const ActionScript& script, int length, const NoiseSchedule& schedule,
                      const GuidanceConfig& cfg, std::uint64_t seed, int fps, SampleTrace* trace = nullptr);

struct AitsResult {
  double seconds_per_prompt = 0;
  std::vector<double> per_prompt;
};

/// Wall-clock mean over prompts at batch size 1. Model loading is the caller's concern.
AitsResult measure_aits(const ModelBundle& model, std::span<const SampleRequest> prompts, const NoiseSchedule& schedule,
                        const GuidanceConfig& cfg, int fps);

/// Per-step cost decomposition for reconstructive guidance.
struct RegOverhead {
  double aits_none = 0, aits_all = 0;
  double step_baseline = 0;     // seconds per step without REG
  double step_reg = 0;          // seconds per REG-enabled step
  double denoiser_pass = 0;     // one batch-1 denoiser call
  double encoder_pass = 0;      // one batch-1 motion-encoder call
  double predicted_step_reg = 0;
  double relative_error = 0;    // |step_reg - predicted| / predicted
};

RegOverhead measure_reg_overhead(const ModelBundle& model, std::span<const SampleRequest> prompts,
                                 const NoiseSchedule& schedule, const GuidanceConfig& cfg, int fps, int repeats = 3);

}  // namespace ram
