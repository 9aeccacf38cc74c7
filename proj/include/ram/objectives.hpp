// SPDX-License-Identifier: Apache-2.0
// Training losses of the two-stream model and the combined update step.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ram/model/networks.hpp"
#include "ram/numerics/optim.hpp"
#include "ram/schedule.hpp"

namespace ram {

/// full: rec + gen + w_sr*sr + w_latent*latent.
/// A: rec + gen. B/C: rec + gen + {1, 1e-5} * latent with beta = 1.
/// D: rec + gen + 0.1 * contrastive. E: D plus 1e-5 * latent with beta = 1.
enum class Variant { full, A, B, C, D, E };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

inline constexpr double kContrastiveTau = 0.1;
inline constexpr double kContrastiveWeight = 0.1;

struct LossConfig {
  double w_sr = 1.0;
  double w_latent = 0.5;
  double beta = 0.01;
  double tau = 1.0;
  double cond_dropout = 0.10;
  Variant variant = Variant::full;

  void validate() const;
};

struct LossReport {
  double l_rec = 0, l_gen = 0, l_sr = 0, l_latent = 0, l_contrastive = 0, l_overall = 0;
};

// ---- Individual terms ----------------------------------------------------

/// Per row: squared error summed over channels and valid frames, divided by the
/// row's valid-frame count; then averaged over rows.
Var masked_mse(const Var& pred, const Var& target, std::span<const std::uint8_t> mask);

/// Self-regularization over motion latents [B, E]; B >= 2.
Var loss_sr(const Var& z_m, double tau);

/// mean_b || z_t - (1 - beta) sg(z_m) - beta z_m ||^2
Var loss_latent(const Var& z_t, const Var& z_m, double beta);

/// Symmetric InfoNCE between matched rows of a and b.
Var loss_contrastive(const Var& a, const Var& b, double tau);

// ---- Training step -------------------------------------------------------

/// Per-step random draws, shared by both branches.
struct StepDraws {
  std::vector<int> t;                 // one per row
  Tensor eps;                         // like batch.x
  std::vector<std::uint8_t> dropped;  // 1 where the condition latent is replaced by zero
};

/// Timesteps and noise come from the "noise" stream, dropout flags from the
/// "dropout" stream, both forked by step.
StepDraws draw_step(const MotionBatch& batch, const NoiseSchedule& schedule, double cond_dropout, std::uint64_t seed,
                    std::int64_t step);
/// One uniform draw per row from the dropout stream alone.
std::vector<std::uint8_t> draw_dropout(std::int64_t rows, double p, std::uint64_t seed, std::int64_t step);

struct LossTerms {
  Var rec, gen, sr, latent, contrastive, overall;
  LossReport report() const;
};

LossTerms compute_losses(Tape& tape, const ModelBundle& model, const MotionBatch& batch, const NoiseSchedule& schedule,
                         const LossConfig& config, const StepDraws& draws);

/// Forward, backward and one Adam update. Throws NumericError naming the first non-finite term.
LossReport train_step(ModelBundle& model, Adam& optimizer, const MotionBatch& batch, const NoiseSchedule& schedule,
                      const LossConfig& config, const StepDraws& draws);

// ---- Loop ----------------------------------------------------------------

struct TrainOptions {
  int batch_size = 32;
  std::uint64_t seed = 0;
  int warmup_steps = 0;
  double lr = 1e-4;
};

/// Rows of the training split used at `step`: distinct indices from the "batch" stream.
std::vector<std::size_t> batch_indices(std::size_t pool, int batch_size, std::uint64_t seed, std::int64_t step);

using StepCallback = std::function<void(std::int64_t step, const LossReport&)>;

/// Runs steps [optimizer.steps(), end_step). State lives entirely in the model
/// and optimizer, so a resumed run continues the same trajectory.
void train(ModelBundle& model, Adam& optimizer, std::span<const MotionSequence> train_set, const NoiseSchedule& schedule,
           const LossConfig& loss, const TrainOptions& options, std::int64_t end_step, const StepCallback& on_step = {});

}  // namespace ram
