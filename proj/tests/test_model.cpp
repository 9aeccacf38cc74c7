// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <regex>

#include "ram/model/networks.hpp"
#include "ram/numerics/ops.hpp"

using namespace ram;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.latent_dim = 16;
  c.width = 24;
  c.encoder_layers = 2;
  c.denoiser_layers = 2;
  c.heads = 4;
  c.token_dim = 8;
  c.train_steps = 10;
  c.seed = 5;
  return c;
}

std::int64_t block_count(std::int64_t w, std::int64_t f) {
  return 2 * 2 * w + 4 * (w * w + w) + (w * f * w + f * w) + (f * w * w + w);
}
std::int64_t stack_count(std::int64_t w, std::int64_t n, std::int64_t f) { return n * block_count(w, f) + 2 * w; }
std::int64_t encoder_count(std::int64_t in, std::int64_t w, std::int64_t n, std::int64_t f) {
  return in * w + w + w + stack_count(w, n, f);
}

MotionSequence ramp(int length, float slope) {
  MotionSequence s;
  s.length = length;
  s.dims = kNumChannels;
  s.fps = 20;
  s.script.tokens = {0, 3};
  s.mask.assign(static_cast<std::size_t>(length), 1);
  s.frames.resize(static_cast<std::size_t>(length) * kNumChannels);
  for (int f = 0; f < length; ++f) {
    for (int c = 0; c < kNumChannels; ++c) s.frames[f * kNumChannels + c] = slope * f * (c + 1) / length + 0.1f * c;
  }
  return s;
}

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<Real>(rng.normal());
  return t;
}

}  // namespace

TEST_CASE("parameter counts follow the layer formulas") {
  for (const ModelConfig& c : {tiny(), ModelConfig{}}) {
    const ModelBundle m(c);
    const std::int64_t E = c.latent_dim, W = c.width, F = c.ff_mult, d = c.frame_dims;
    CHECK(m.parameter_count("e_m") == encoder_count(d, E, c.encoder_layers, F));
    CHECK(m.parameter_count("e_t") == c.vocab * c.token_dim + encoder_count(c.token_dim, E, c.encoder_layers, F));
    const std::int64_t den = (d * W + W) + 2 * (W * W + W) + (E * W + W) + stack_count(W, c.denoiser_layers, F) +
                             (W * d + d);
    CHECK(m.parameter_count("d") == den);
    CHECK(m.params().count_values() == m.parameter_count("e_m") + m.parameter_count("e_t") + m.parameter_count("d"));
  }
}

TEST_CASE("parameter names follow the checkpoint grammar") {
  const ModelBundle m(tiny());
  const std::regex grammar(R"((e_m|e_t|d)/[A-Za-z0-9_.]+/[A-Za-z0-9_]+)");
  for (const Parameter* p : m.params().all()) CHECK_MESSAGE(std::regex_match(p->name, grammar), p->name);
  CHECK(m.params().find("e_m/special/token"));
  CHECK(m.params().find("e_t/special/token"));
  CHECK(m.params().find("d/block0.wq/w"));
  CHECK(m.params().find("d/out_proj/w")->value.shape() == Shape{24, kNumChannels});
}

TEST_CASE("latent width changes only encoder and condition projection shapes") {
  ModelConfig a = tiny(), b = tiny();
  b.latent_dim = 32;
  const ModelBundle ma(a), mb(b);
  for (const Parameter* p : ma.params().all()) {
    const Parameter* q = mb.params().find(p->name);
    REQUIRE(q);
    const bool may_change = p->name.rfind("e_m/", 0) == 0 || p->name.rfind("e_t/", 0) == 0 || p->name == "d/cond_proj/w";
    if (p->name == "e_t/token_table/weight") CHECK(p->value.shape() == q->value.shape());
    if (!may_change) CHECK_MESSAGE(p->value.shape() == q->value.shape(), p->name);
  }
  CHECK(ma.params().find("d/cond_proj/w")->value.shape() == Shape{16, 24});
  CHECK(mb.params().find("d/cond_proj/w")->value.shape() == Shape{32, 24});
}

TEST_CASE("initialization is a pure function of the seed") {
  ModelConfig c = tiny();
  CHECK(ModelBundle(c).params().hash() == ModelBundle(c).params().hash());
  c.seed = 6;
  CHECK(ModelBundle(c).params().hash() != ModelBundle(tiny()).params().hash());
}

TEST_CASE("motion latents: shape, purity, order sensitivity") {
  const ModelBundle m(tiny());
  const MotionSequence x = ramp(12, 1.0f);
  const Latent a = encode_motion(m, x), b = encode_motion(m, x);
  CHECK(a.source == LatentSource::motion);
  CHECK(a.values.shape() == Shape{16});
  CHECK(a.values == b.values);
  MotionSequence rev = x;
  for (int f = 0; f < x.length; ++f) {
    std::copy_n(&x.frames[(x.length - 1 - f) * kNumChannels], kNumChannels, &rev.frames[f * kNumChannels]);
  }
  CHECK_FALSE(encode_motion(m, rev).values == a.values);

  MotionSequence empty = x;
  std::fill(empty.mask.begin(), empty.mask.end(), 0);
  CHECK_THROWS(encode_motion(m, empty));
}

TEST_CASE("condition latents: shape, purity, vocabulary checks") {
  const ModelBundle m(tiny());
  const std::vector<std::uint16_t> toks{1, 4, 7};
  const Latent a = encode_condition(m, toks), b = encode_condition(m, toks);
  CHECK(a.source == LatentSource::condition);
  CHECK(a.values.shape() == Shape{16});
  CHECK(a.values == b.values);
  CHECK_FALSE(encode_condition(m, std::vector<std::uint16_t>{7, 4, 1}).values == a.values);
  CHECK_THROWS_AS(encode_condition(m, std::vector<std::uint16_t>{}), std::invalid_argument);
  CHECK_THROWS_AS(encode_condition(m, std::vector<std::uint16_t>{2, 8}), std::out_of_range);

  const Latent null = Latent::null(16);
  CHECK(null.source == LatentSource::null);
  CHECK(std::all_of(null.values.data().begin(), null.values.data().end(), [](Real v) { return v == 0; }));
}

TEST_CASE("denoise shape, masking and batch independence") {
  const ModelBundle m(tiny());
  const std::int64_t B = 3, L = 7, d = kNumChannels;
  Tensor x = random_tensor({B, L, d}, 1);
  const Tensor z = random_tensor({B, 16}, 2);
  std::vector<std::uint8_t> mask(B * L, 1);
  for (std::int64_t f = 4; f < L; ++f) mask[1 * L + f] = 0;  // row 1 has 4 valid frames
  const std::vector<int> t{0, 5, 9};

  Tape tape(Tape::Mode::no_grad);
  const Tensor out = m.denoise(tape, tape.constant(x), t, tape.constant(z), mask).value();
  CHECK(out.shape() == x.shape());
  for (std::int64_t f = 4; f < L; ++f) {
    for (std::int64_t c = 0; c < d; ++c) CHECK(out[(1 * L + f) * d + c] == 0);
  }

  // Padded content is ignored.
  Tensor x2 = x;
  for (std::int64_t f = 4; f < L; ++f) {
    for (std::int64_t c = 0; c < d; ++c) x2[(1 * L + f) * d + c] = 100;
  }
  Tape t2(Tape::Mode::no_grad);
  CHECK(m.denoise(t2, t2.constant(x2), t, t2.constant(z), mask).value() == out);

  // Row 1 alone, unpadded, gives the same bits.
  Tensor x1({1, 4, d});
  for (std::int64_t f = 0; f < 4; ++f) {
    for (std::int64_t c = 0; c < d; ++c) x1[f * d + c] = x[(1 * L + f) * d + c];
  }
  Tensor z1({1, 16});
  for (int k = 0; k < 16; ++k) z1[k] = z[16 + k];
  Tape t3(Tape::Mode::no_grad);
  const std::vector<int> t1{5};
  const Tensor alone = m.denoise(t3, t3.constant(x1), t1, t3.constant(z1), std::vector<std::uint8_t>(4, 1)).value();
  for (std::int64_t f = 0; f < 4; ++f) {
    for (std::int64_t c = 0; c < d; ++c) CHECK(alone[f * d + c] == out[(1 * L + f) * d + c]);
  }

  Tape t4(Tape::Mode::no_grad);
  CHECK_THROWS_AS(m.denoise(t4, t4.constant(x), std::vector<int>{0, 10, 1}, t4.constant(z), mask), std::out_of_range);
  CHECK_THROWS_AS(m.denoise(t4, t4.constant(x), t, t4.constant(random_tensor({B, 8}, 3)), mask), ShapeError);
  CHECK_THROWS_AS(m.denoise(t4, t4.constant(x), std::vector<int>{0, 1}, t4.constant(z), mask), ShapeError);
}

TEST_CASE("conditioning and timestep paths are live at initialization") {
  const ModelBundle m(tiny());
  const Tensor x = random_tensor({2, 6, kNumChannels}, 4);
  const std::vector<std::uint8_t> mask(12, 1);
  Tape tape;
  const Var z = tape.input(random_tensor({2, 16}, 5), true);
  const Var out = m.denoise(tape, tape.constant(x), std::vector<int>{3, 3}, z, mask);
  const Gradients g = tape.backward(ops::sum(ops::square(out)));
  double norm = 0;
  const Tensor grad = g.of(z);
  for (Real v : grad.data()) norm += static_cast<double>(v) * v;
  CHECK(norm > 1e-8);

  Tape a(Tape::Mode::no_grad), b(Tape::Mode::no_grad);
  const Tensor zc = random_tensor({2, 16}, 5);
  CHECK_FALSE(m.denoise(a, a.constant(x), std::vector<int>{0, 0}, a.constant(zc), mask).value() ==
              m.denoise(b, b.constant(x), std::vector<int>{9, 9}, b.constant(zc), mask).value());
}

TEST_CASE("repeated calls are bit-identical") {
  const ModelBundle m(tiny());
  const Tensor x = random_tensor({2, 5, kNumChannels}, 8);
  const Tensor z = random_tensor({2, 16}, 9);
  const std::vector<std::uint8_t> mask(10, 1);
  Tape a(Tape::Mode::no_grad), b;
  CHECK(m.denoise(a, a.constant(x), std::vector<int>{1, 2}, a.constant(z), mask).value() ==
        m.denoise(b, b.constant(x), std::vector<int>{1, 2}, b.constant(z), mask).value());
}
