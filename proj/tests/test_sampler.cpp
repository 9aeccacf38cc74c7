// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "ram/sampler.hpp"

using namespace ram;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.latent_dim = 16;
  c.width = 16;
  c.encoder_layers = 1;
  c.denoiser_layers = 2;
  c.heads = 2;
  c.token_dim = 8;
  c.train_steps = 10;
  c.seed = 11;
  return c;
}

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<Real>(rng.normal());
  return t;
}

GuidanceConfig guidance(double w1, double w2, const std::string& reg = "all") {
  GuidanceConfig g;
  g.w1 = w1;
  g.w2 = w2;
  g.respacing = make_respacing(10, 5);
  g.reg_steps = parse_reg_steps(reg, g.respacing);
  return g;
}

Tensor denoise(const ModelBundle& m, const Tensor& x, int t, const Tensor& z) {
  Tape tape(Tape::Mode::no_grad);
  const std::vector<std::uint8_t> mask(static_cast<std::size_t>(x.dim(0) * x.dim(1)), 1);
  const std::vector<int> ts(static_cast<std::size_t>(x.dim(0)), t);
  return m.denoise(tape, tape.constant(x), ts, tape.constant(z), mask).value();
}

}  // namespace

TEST_CASE("guidance combination algebra") {
  const Tensor c = random_tensor({2, 3, 4}, 1), r = random_tensor({2, 3, 4}, 2), u = random_tensor({2, 3, 4}, 3);
  CHECK(combine_guidance(c, nullptr, nullptr, 0, 0) == c);
  const Tensor out = combine_guidance(c, &r, &u, 5.0, 1.5);
  for (std::int64_t i = 0; i < c.numel(); ++i) {
    const double want = c[i] + 5.0 * (double(c[i]) - r[i]) + 1.5 * (double(c[i]) - u[i]);
    CHECK(out[i] == doctest::Approx(want).epsilon(1e-6));
  }
  const Tensor only_cfg = combine_guidance(c, nullptr, &u, 0, 2.0);
  for (std::int64_t i = 0; i < c.numel(); ++i) CHECK(only_cfg[i] == static_cast<Real>(3.0 * c[i] - 2.0 * u[i]));
  CHECK_THROWS_AS(combine_guidance(c, nullptr, &u, 1.0, 1.0), std::invalid_argument);
  const Tensor bad = random_tensor({2, 3, 5}, 4);
  CHECK_THROWS_AS(combine_guidance(c, &bad, nullptr, 1.0, 0), ShapeError);
}

TEST_CASE("reconstructive step parsing and validation") {
  const RespacingPlan plan = make_respacing(50, 20);
  CHECK(parse_reg_steps("none", plan).empty());
  const auto all = parse_reg_steps("all", plan);
  CHECK(all.size() == 19);
  CHECK(all.front() == plan.indices[1]);
  CHECK(parse_reg_steps("early:3", plan) == std::vector<int>(plan.indices.begin() + 1, plan.indices.begin() + 4));
  for (const char* bad : {"early:", "early:x", "early:2x", "early:-1", "early:20", "some"}) {
    CHECK_THROWS_AS(parse_reg_steps(bad, plan), std::invalid_argument);
  }
  GuidanceConfig g;
  g.respacing = plan;
  g.reg_steps = {plan.indices.front()};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.reg_steps = {plan.indices[1] + 1};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.reg_steps = all;
  g.w1 = -1;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  const GuidanceConfig d = default_guidance();
  CHECK(d.w1 == 5.0);
  CHECK(d.w2 == 1.5);
  CHECK(d.reg_steps == reg_steps_all(d.respacing));
}

TEST_CASE("guided estimate matches the branch algebra on explicit denoiser calls") {
  const ModelBundle m(tiny());
  const Tensor x = random_tensor({2, 5, kNumChannels}, 5), z = random_tensor({2, 16}, 6);
  const std::vector<std::uint8_t> mask(10, 1);
  const GuidanceConfig g = guidance(5.0, 1.5);
  const int t = g.respacing.indices[1];

  SamplerState state;
  state.prev_estimate = random_tensor({2, 5, kNumChannels}, 7);
  SampleTrace trace;
  const Tensor got = guided_estimate(m, x, t, z, mask, state, g, &trace);

  Tape tape(Tape::Mode::no_grad);
  const Tensor zm = m.encode_motion(tape, tape.constant(*state.prev_estimate), mask).value();
  const Tensor c = denoise(m, x, t, z), r = denoise(m, x, t, zm), u = denoise(m, x, t, Tensor({2, 16}));
  CHECK(got == combine_guidance(c, &r, &u, 5.0, 1.5));
  CHECK(trace.encoder_rows == 2);
  CHECK(trace.denoiser_rows == 6);
  CHECK(trace.recorded_ops == 0);

  // The cached latent is reused.
  (void)guided_estimate(m, x, t, z, mask, state, g, &trace);
  CHECK(trace.encoder_rows == 2);

  // Without reconstructive guidance at this step only two branches run.
  GuidanceConfig cfg_only = guidance(5.0, 1.5, "none");
  SampleTrace t2;
  CHECK(guided_estimate(m, x, t, z, mask, state, cfg_only, &t2) == combine_guidance(c, nullptr, &u, 0, 1.5));
  CHECK(t2.denoiser_rows == 4);

  // Zero weights reduce to the conditional prediction.
  SamplerState empty;
  CHECK(guided_estimate(m, x, t, z, mask, empty, guidance(0, 0, "none")) == c);
}

TEST_CASE("reconstructive guidance without a previous estimate is an error") {
  const ModelBundle m(tiny());
  SamplerState state;
  const std::vector<std::uint8_t> mask(5, 1);
  const GuidanceConfig g = guidance(5.0, 1.5);
  CHECK_THROWS_AS(guided_estimate(m, random_tensor({1, 5, kNumChannels}, 1), g.respacing.indices[1],
                                  random_tensor({1, 16}, 2), mask, state, g),
                  std::logic_error);
}

TEST_CASE("batched sampling equals sampling each request alone") {
  const ModelBundle m(tiny());
  const NoiseSchedule sched = make_schedule(ScheduleKind::cosine, 10);
  const GuidanceConfig g = guidance(5.0, 1.5);
  std::vector<SampleRequest> reqs = {{ActionScript{{0, 3}}, 6, 1}, {ActionScript{{5}}, 9, 2}, {ActionScript{{1, 2, 7}}, 4, 3}};
  SampleTrace trace;
  const auto many = sample_many(m, reqs, sched, g, 20, &trace);
  REQUIRE(many.size() == 3);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    const MotionSequence alone = sample(m, reqs[i].script, reqs[i].length, sched, g, reqs[i].seed, 20);
    CHECK(alone.length == reqs[i].length);
    CHECK(alone.fps == 20);
    CHECK(alone.script.tokens == reqs[i].script.tokens);
    CHECK(alone.frames == many[i].frames);
    CHECK(std::all_of(alone.frames.begin(), alone.frames.end(), [](float v) { return std::isfinite(v); }));
  }
  CHECK(trace.steps == 5);
  CHECK(trace.recorded_ops == 0);
  CHECK(trace.encoder_rows == 3 * 4);
  CHECK(trace.denoiser_rows == 3 * (2 + 4 * 3));
}

TEST_CASE("sampling is a pure function of the seed") {
  const ModelBundle m(tiny());
  const NoiseSchedule sched = make_schedule(ScheduleKind::cosine, 10);
  const GuidanceConfig g = guidance(5.0, 1.5);
  const ActionScript s{{0, 4}};
  const auto a = sample(m, s, 7, sched, g, 9, 20), b = sample(m, s, 7, sched, g, 9, 20);
  CHECK(a.frames == b.frames);
  CHECK_FALSE(sample(m, s, 7, sched, g, 10, 20).frames == a.frames);
  CHECK_FALSE(sample(m, s, 7, sched, guidance(0, 1.5, "none"), 9, 20).frames == a.frames);
}

TEST_CASE("sampler input errors") {
  const ModelBundle m(tiny());
  const GuidanceConfig g = guidance(5.0, 1.5);
  CHECK_THROWS(sample(m, ActionScript{{0}}, 5, make_schedule(ScheduleKind::cosine, 20), g, 1, 20));
  CHECK_THROWS(sample(m, ActionScript{{0}}, 0, make_schedule(ScheduleKind::cosine, 10), g, 1, 20));
  CHECK_THROWS(sample(m, ActionScript{}, 5, make_schedule(ScheduleKind::cosine, 10), g, 1, 20));
  CHECK(sample_many(m, {}, make_schedule(ScheduleKind::cosine, 10), g, 20).empty());
}

TEST_CASE("constant stub branches combine affinely") {
  // The stub encoder marks its latent with 2; the condition carries 1 and the null latent 0.
  GuidanceModels stub;
  const Real c[3] = {Real(0.7), Real(-1.3), Real(2.1)};
  stub.encode = [](const Tensor& x, std::span<const std::uint8_t>) { return Tensor({x.dim(0), 4}, Real(2)); };
  stub.denoise = [&c](const Tensor& x, std::span<const int>, const Tensor& z, std::span<const std::uint8_t>) {
    Tensor out(x.shape());
    const std::int64_t row = x.numel() / x.dim(0);
    for (std::int64_t n = 0; n < x.dim(0); ++n) {
      const Real marker = z[n * 4];
      const Real v = marker == 1 ? c[0] : marker == 2 ? c[1] : c[2];
      std::fill_n(out.ptr() + n * row, row, v);
    }
    return out;
  };
  const Tensor x = random_tensor({2, 3, kNumChannels}, 1);
  const Tensor z({2, 4}, Real(1));
  const std::vector<std::uint8_t> mask(6, 1);
  Rng rng(99);
  for (int i = 0; i < 100; ++i) {
    const double w1 = rng.uniform() * 10, w2 = rng.uniform() * 10;
    GuidanceConfig g = guidance(w1, w2);
    SamplerState state;
    state.prev_estimate = x;
    const Tensor out = guided_estimate(stub, x, g.respacing.indices[1], z, mask, state, g);
    const double want = (1 + w1 + w2) * c[0] - w1 * c[1] - w2 * c[2];
    for (Real v : out.data()) REQUIRE(v == doctest::Approx(want).epsilon(1e-5));
  }
  SamplerState state;
  const Tensor out = guided_estimate(stub, x, 9, z, mask, state, guidance(0, 0, "none"));
  for (Real v : out.data()) CHECK(v == c[0]);
}
