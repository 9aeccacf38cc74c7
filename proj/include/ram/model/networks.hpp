// SPDX-License-Identifier: Apache-2.0
// Motion encoder E_m, condition encoder E_t and the shared denoiser D.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ram/model/layers.hpp"
#include "ram/synthdata.hpp"

namespace ram {

struct ModelConfig {
  int frame_dims = kNumChannels;  // d
  int latent_dim = 256;           // d_E, also the encoder width
  int width = 512;                // denoiser internal width
  int encoder_layers = 6;
  int denoiser_layers = 8;
  int heads = 4;
  int ff_mult = 2;
  int token_dim = 64;             // d_f
  int vocab = kNumActions;
  int train_steps = 50;           // timestep table rows
  std::uint64_t seed = 0;         // init stream

  /// Throws std::invalid_argument on inconsistent sizes.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class LatentSource { motion, condition, null };

/// One latent vector with its provenance.
struct Latent {
  Tensor values;  // [d_E]
  LatentSource source = LatentSource::null;

  static Latent null(int dim) { return {Tensor({dim}), LatentSource::null}; }
};

/// Parameter sets of all networks. Parameter addresses are stable for the bundle's lifetime.
class ModelBundle {
 public:
  explicit ModelBundle(const ModelConfig& config);
  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;
  ModelBundle(ModelBundle&&) = default;
  ModelBundle& operator=(ModelBundle&&) = default;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// Motion batch [B, L, d] with B*L mask flags -> [B, d_E].
  Var encode_motion(Tape& tape, const Var& x0, std::span<const std::uint8_t> mask) const;
  /// Token ids [B * Lt] with flags -> [B, d_E]. Throws on an empty row or an out-of-vocabulary id.
  Var encode_condition(Tape& tape, std::span<const std::int64_t> ids, std::span<const std::uint8_t> token_mask,
                       std::int64_t batch) const;
  /// x0 estimate for x_t [B, L, d] at per-row timesteps with latents z [B, d_E]; padded frames are zero.
  Var denoise(Tape& tape, const Var& x_t, std::span<const int> t, const Var& z, std::span<const std::uint8_t> mask) const;

  /// Parameter counts of "e_m", "e_t" and "d".
  std::int64_t parameter_count(const std::string& prefix) const { return params_.count_values(prefix + "/"); }

 private:
  ModelConfig config_;
  ParameterStore params_;
  SequenceEncoder e_m_, e_t_;
  const Parameter* token_table_ = nullptr;
  Linear d_in_, d_out_, d_time1_, d_time2_, d_cond_;
  TransformerStack d_stack_;
  Tensor time_table_;
};

/// Convenience wrappers for single sequences.
Latent encode_motion(const ModelBundle& m, const MotionSequence& x0);
Latent encode_condition(const ModelBundle& m, std::span<const std::uint16_t> tokens);

}  // namespace ram
