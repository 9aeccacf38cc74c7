// SPDX-License-Identifier: Apache-2.0
#include "ram/model/networks.hpp"

#include <stdexcept>

namespace ram {

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("model config: " + what);
  };
  need(frame_dims > 0, "frame_dims must be positive");
  need(latent_dim > 0 && width > 0 && token_dim > 0, "widths must be positive");
  need(encoder_layers >= 0 && denoiser_layers >= 0, "layer counts must be non-negative");
  need(heads > 0 && latent_dim % heads == 0 && width % heads == 0, "heads must divide latent_dim and width");
  need(ff_mult > 0, "ff_mult must be positive");
  need(vocab > 0, "vocab must be positive");
  need(train_steps >= 2, "train_steps must be at least 2");
}

ModelBundle::ModelBundle(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng = Rng::stream(config_.seed, "init");
  const int E = config_.latent_dim, W = config_.width;
  e_m_ = SequenceEncoder::create(params_, "e_m", config_.frame_dims, E, config_.encoder_layers, config_.heads,
                                 config_.ff_mult, rng);
  token_table_ = &params_.add("e_t/token_table/weight", normal_init({config_.vocab, config_.token_dim}, 1.0, rng));
  e_t_ = SequenceEncoder::create(params_, "e_t", config_.token_dim, E, config_.encoder_layers, config_.heads,
                                 config_.ff_mult, rng);
  d_in_ = Linear::create(params_, "d/in_proj", config_.frame_dims, W, rng);
  d_time1_ = Linear::create(params_, "d/time_mlp1", W, W, rng);
  d_time2_ = Linear::create(params_, "d/time_mlp2", W, W, rng);
  d_cond_ = Linear::create(params_, "d/cond_proj", E, W, rng);
  d_stack_ = TransformerStack::create(params_, "d", W, config_.denoiser_layers, config_.heads, config_.ff_mult, rng);
  d_out_ = Linear::create(params_, "d/out_proj", W, config_.frame_dims, rng);
  time_table_ = sinusoidal_table(config_.train_steps, W);
}

Var ModelBundle::encode_motion(Tape& tape, const Var& x0, std::span<const std::uint8_t> mask) const {
  if (x0.value().rank() != 3 || x0.dim(2) != config_.frame_dims) {
    throw ShapeError("encode_motion: expected [B,L," + std::to_string(config_.frame_dims) + "], got " +
                     shape_str(x0.shape()));
  }
  return e_m_(tape, x0, mask);
}

Var ModelBundle::encode_condition(Tape& tape, std::span<const std::int64_t> ids, std::span<const std::uint8_t> token_mask,
                                  std::int64_t batch) const {
  if (batch <= 0 || ids.empty() || ids.size() % static_cast<std::size_t>(batch) != 0 || token_mask.size() != ids.size()) {
    throw std::invalid_argument("encode_condition: empty or ragged token batch");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (token_mask[i] && (ids[i] < 0 || ids[i] >= config_.vocab)) {
      throw std::out_of_range("encode_condition: token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                              std::to_string(config_.vocab));
    }
  }
  const std::int64_t L = static_cast<std::int64_t>(ids.size()) / batch;
  Var f = ops::reshape(ops::gather_rows(tape.param(*token_table_), ids), {batch, L, config_.token_dim});
  return e_t_(tape, f, token_mask);
}

Var ModelBundle::denoise(Tape& tape, const Var& x_t, std::span<const int> t, const Var& z,
                         std::span<const std::uint8_t> mask) const {
  if (x_t.value().rank() != 3 || x_t.dim(2) != config_.frame_dims) {
    throw ShapeError("denoise: expected [B,L," + std::to_string(config_.frame_dims) + "], got " + shape_str(x_t.shape()));
  }
  const std::int64_t B = x_t.dim(0), L = x_t.dim(1), W = config_.width;
  if (z.shape() != Shape{B, config_.latent_dim}) {
    throw ShapeError("denoise: latent " + shape_str(z.shape()) + " does not match batch " + std::to_string(B) +
                     " and d_E " + std::to_string(config_.latent_dim));
  }
  if (static_cast<std::int64_t>(t.size()) != B) throw ShapeError("denoise: need one timestep per batch row");
  std::vector<std::int64_t> ids(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < 0 || t[i] >= config_.train_steps) {
      throw std::out_of_range("denoise: timestep " + std::to_string(t[i]) + " outside [0, " +
                              std::to_string(config_.train_steps) + ")");
    }
    ids[i] = t[i];
  }
  const std::vector<std::uint8_t> full_mask = prepend_valid(mask, B, L);

  const Var temb = d_time2_(tape, ops::silu(d_time1_(tape, ops::gather_rows(tape.constant(time_table_), ids))));
  const Var token = ops::reshape(ops::add(temb, d_cond_(tape, z)), {B, 1, W});
  Var h = ops::concat({token, d_in_(tape, x_t)}, 1);
  h = ops::add(h, tape.constant(sinusoidal_table(L + 1, W)));
  h = d_stack_(tape, h, full_mask);
  const Var out = d_out_(tape, ops::slice(h, 1, 1, L));

  Tensor keep({B, L, static_cast<std::int64_t>(config_.frame_dims)});
  for (std::int64_t r = 0; r < B * L; ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    for (int c = 0; c < config_.frame_dims; ++c) keep[r * config_.frame_dims + c] = Real(1);
  }
  return ops::mul(out, tape.constant(std::move(keep)));
}

Latent encode_motion(const ModelBundle& m, const MotionSequence& x0) {
  MotionBatch b = make_batch(std::span<const MotionSequence>(&x0, 1));
  Tape tape(Tape::Mode::no_grad);
  Var z = m.encode_motion(tape, tape.constant(b.x), b.mask);
  return {z.value().reshaped({m.config().latent_dim}), LatentSource::motion};
}

Latent encode_condition(const ModelBundle& m, std::span<const std::uint16_t> tokens) {
  if (tokens.empty()) throw std::invalid_argument("encode_condition: empty token list");
  std::vector<std::int64_t> ids(tokens.begin(), tokens.end());
  std::vector<std::uint8_t> mask(tokens.size(), 1);
  Tape tape(Tape::Mode::no_grad);
  Var z = m.encode_condition(tape, ids, mask, 1);
  return {z.value().reshaped({m.config().latent_dim}), LatentSource::condition};
}

}  // namespace ram
