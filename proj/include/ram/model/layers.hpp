// SPDX-License-Identifier: Apache-2.0
// Parameter-bound building blocks shared by the encoders, the denoiser and the evaluator.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ram/numerics/ops.hpp"
#include "ram/numerics/params.hpp"

namespace ram {

struct Linear {
  const Parameter* w = nullptr;  // [in, out]
  const Parameter* b = nullptr;  // [out]

  static Linear create(ParameterStore& store, const std::string& prefix, std::int64_t in, std::int64_t out, Rng& rng);
  Var operator()(Tape& tape, const Var& x) const;
};

struct LayerNorm {
  const Parameter* gamma = nullptr;
  const Parameter* beta = nullptr;

  static LayerNorm create(ParameterStore& store, const std::string& prefix, std::int64_t width);
  Var operator()(Tape& tape, const Var& x) const;
};

/// Pre-normalization transformer block: x + attn(ln(x)), then x + ff(ln(x)).
struct TransformerBlock {
  LayerNorm ln1, ln2;
  Linear wq, wk, wv, wo, ff1, ff2;
  int heads = 1;

  static TransformerBlock create(ParameterStore& store, const std::string& prefix, std::int64_t width, int heads,
                                 int ff_mult, Rng& rng);
  Var operator()(Tape& tape, const Var& x, std::span<const std::uint8_t> mask) const;
};

/// Stack of blocks with a closing layer norm.
struct TransformerStack {
  std::vector<TransformerBlock> blocks;
  LayerNorm final_ln;

  static TransformerStack create(ParameterStore& store, const std::string& prefix, std::int64_t width, int layers,
                                 int heads, int ff_mult, Rng& rng);
  Var operator()(Tape& tape, const Var& x, std::span<const std::uint8_t> mask) const;
};

/// rows x width table; row p holds sin(p / 10000^(2i/width)) in even and cos in odd columns.
Tensor sinusoidal_table(std::int64_t rows, std::int64_t width);

/// Projects [B, L, in] features, prepends a learned token, adds positional
/// encodings, runs the stack and reads out the prepended position: [B, width].
struct SequenceEncoder {
  Linear in_proj;
  const Parameter* special = nullptr;  // [width]
  TransformerStack stack;
  std::int64_t width = 0;

  static SequenceEncoder create(ParameterStore& store, const std::string& prefix, std::int64_t in, std::int64_t width,
                                int layers, int heads, int ff_mult, Rng& rng);
  /// `mask` holds B*L frame flags; every row needs at least one valid frame.
  Var operator()(Tape& tape, const Var& features, std::span<const std::uint8_t> mask) const;
};

/// Prepends one valid flag per batch row to a [B*L] mask.
std::vector<std::uint8_t> prepend_valid(std::span<const std::uint8_t> mask, std::int64_t batch, std::int64_t length);

}  // namespace ram
