// SPDX-License-Identifier: Apache-2.0
#include "ram/model/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace ram {

Linear Linear::create(ParameterStore& store, const std::string& prefix, std::int64_t in, std::int64_t out, Rng& rng) {
  Linear l;
  l.w = &store.add(prefix + "/w", xavier_uniform(in, out, rng));
  l.b = &store.add(prefix + "/b", Tensor({out}));
  return l;
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  return ops::add(ops::matmul(x, tape.param(*w)), tape.param(*b));
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& prefix, std::int64_t width) {
  LayerNorm n;
  n.gamma = &store.add(prefix + "/gamma", Tensor({width}, Real(1)));
  n.beta = &store.add(prefix + "/beta", Tensor({width}));
  return n;
}

Var LayerNorm::operator()(Tape& tape, const Var& x) const {
  return ops::layer_norm(x, tape.param(*gamma), tape.param(*beta));
}

TransformerBlock TransformerBlock::create(ParameterStore& store, const std::string& prefix, std::int64_t width,
                                          int heads, int ff_mult, Rng& rng) {
  if (heads <= 0 || width % heads != 0) {
    throw std::invalid_argument(prefix + ": width " + std::to_string(width) + " not divisible by " +
                                std::to_string(heads) + " heads");
  }
  TransformerBlock b;
  b.heads = heads;
  b.ln1 = LayerNorm::create(store, prefix + ".ln1", width);
  b.ln2 = LayerNorm::create(store, prefix + ".ln2", width);
  b.wq = Linear::create(store, prefix + ".wq", width, width, rng);
  b.wk = Linear::create(store, prefix + ".wk", width, width, rng);
  b.wv = Linear::create(store, prefix + ".wv", width, width, rng);
  b.wo = Linear::create(store, prefix + ".wo", width, width, rng);
  b.ff1 = Linear::create(store, prefix + ".ff1", width, width * ff_mult, rng);
  b.ff2 = Linear::create(store, prefix + ".ff2", width * ff_mult, width, rng);
  return b;
}

Var TransformerBlock::operator()(Tape& tape, const Var& x, std::span<const std::uint8_t> mask) const {
  const Var h = ln1(tape, x);
  const Var att = ops::attention(wq(tape, h), wk(tape, h), wv(tape, h), mask, heads);
  const Var y = ops::add(x, wo(tape, att));
  return ops::add(y, ff2(tape, ops::gelu(ff1(tape, ln2(tape, y)))));
}

TransformerStack TransformerStack::create(ParameterStore& store, const std::string& prefix, std::int64_t width,
                                          int layers, int heads, int ff_mult, Rng& rng) {
  TransformerStack s;
  for (int i = 0; i < layers; ++i) {
    s.blocks.push_back(TransformerBlock::create(store, prefix + "/block" + std::to_string(i), width, heads, ff_mult, rng));
  }
  s.final_ln = LayerNorm::create(store, prefix + "/final_ln", width);
  return s;
}

Var TransformerStack::operator()(Tape& tape, const Var& x, std::span<const std::uint8_t> mask) const {
  Var h = x;
  for (const auto& b : blocks) h = b(tape, h, mask);
  return final_ln(tape, h);
}

Tensor sinusoidal_table(std::int64_t rows, std::int64_t width) {
  Tensor t({rows, width});
  for (std::int64_t p = 0; p < rows; ++p) {
    for (std::int64_t i = 0; i < width; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(width));
      t[p * width + i] = static_cast<Real>(std::sin(p * freq));
      if (i + 1 < width) t[p * width + i + 1] = static_cast<Real>(std::cos(p * freq));
    }
  }
  return t;
}

SequenceEncoder SequenceEncoder::create(ParameterStore& store, const std::string& prefix, std::int64_t in,
                                        std::int64_t width, int layers, int heads, int ff_mult, Rng& rng) {
  SequenceEncoder e;
  e.width = width;
  e.in_proj = Linear::create(store, prefix + "/in_proj", in, width, rng);
  e.special = &store.add(prefix + "/special/token", normal_init({width}, 0.02, rng));
  e.stack = TransformerStack::create(store, prefix, width, layers, heads, ff_mult, rng);
  return e;
}

std::vector<std::uint8_t> prepend_valid(std::span<const std::uint8_t> mask, std::int64_t batch, std::int64_t length) {
  if (static_cast<std::int64_t>(mask.size()) != batch * length) {
    throw ShapeError("mask of " + std::to_string(mask.size()) + " flags does not cover [" + std::to_string(batch) +
                     "," + std::to_string(length) + "]");
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(batch * (length + 1)));
  for (std::int64_t b = 0; b < batch; ++b) {
    out[static_cast<std::size_t>(b * (length + 1))] = 1;
    for (std::int64_t l = 0; l < length; ++l) {
      out[static_cast<std::size_t>(b * (length + 1) + 1 + l)] = mask[static_cast<std::size_t>(b * length + l)];
    }
  }
  return out;
}

Var SequenceEncoder::operator()(Tape& tape, const Var& features, std::span<const std::uint8_t> mask) const {
  if (features.value().rank() != 3) throw ShapeError("sequence encoder: expected [B,L,F], got " + shape_str(features.shape()));
  const std::int64_t B = features.dim(0), L = features.dim(1);
  if (L == 0) throw std::invalid_argument("sequence encoder: empty sequence");
  for (std::int64_t b = 0; b < B; ++b) {
    bool any = false;
    for (std::int64_t l = 0; l < L && !any; ++l) any = mask[static_cast<std::size_t>(b * L + l)] != 0;
    if (!any) throw std::invalid_argument("sequence encoder: row " + std::to_string(b) + " has no valid frames");
  }
  const std::vector<std::uint8_t> full_mask = prepend_valid(mask, B, L);
  const Var tokens = ops::add(tape.constant(Tensor({B, 1, width})), tape.param(*special));
  Var h = ops::concat({tokens, in_proj(tape, features)}, 1);
  h = ops::add(h, tape.constant(sinusoidal_table(L + 1, width)));
  h = stack(tape, h, full_mask);
  return ops::reshape(ops::slice(h, 1, 0, 1), {B, width});
}

}  // namespace ram
