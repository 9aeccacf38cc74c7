// SPDX-License-Identifier: Apache-2.0
#include "ram/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace ram {

void GuidanceConfig::validate() const {
  if (w1 < 0 || w2 < 0) throw std::invalid_argument("guidance: weights must be non-negative");
  if (respacing.indices.empty()) throw std::invalid_argument("guidance: empty respacing plan");
  for (int t : reg_steps) {
    if (t == respacing.indices.front()) {
      throw std::invalid_argument("guidance: reconstructive guidance cannot run at the first index " + std::to_string(t) +
                                  " (no previous estimate)");
    }
    if (std::find(respacing.indices.begin(), respacing.indices.end(), t) == respacing.indices.end()) {
      throw std::invalid_argument("guidance: reg step " + std::to_string(t) + " is not in the respacing plan");
    }
  }
  if (clamp < 0) throw std::invalid_argument("guidance: clamp must be non-negative");
}

bool GuidanceConfig::reg_active(int t) const { return std::find(reg_steps.begin(), reg_steps.end(), t) != reg_steps.end(); }

std::vector<int> reg_steps_all(const RespacingPlan& plan) {
  return plan.indices.size() > 1 ? std::vector<int>(plan.indices.begin() + 1, plan.indices.end()) : std::vector<int>{};
}

std::vector<int> reg_steps_early(const RespacingPlan& plan, int k) {
  const auto all = reg_steps_all(plan);
  if (k < 0 || static_cast<std::size_t>(k) > all.size()) {
    throw std::invalid_argument("reg steps: early:" + std::to_string(k) + " exceeds the " + std::to_string(all.size()) +
                                " eligible indices");
  }
  return {all.begin(), all.begin() + k};
}

std::vector<int> parse_reg_steps(const std::string& spec, const RespacingPlan& plan) {
  if (spec == "none") return {};
  if (spec == "all") return reg_steps_all(plan);
  if (spec.rfind("early:", 0) == 0) {
    std::size_t used = 0;
    int k = -1;
    try {
      k = std::stoi(spec.substr(6), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != spec.size() - 6) throw std::invalid_argument("reg steps: bad count in '" + spec + "'");
    return reg_steps_early(plan, k);
  }
  throw std::invalid_argument("reg steps: expected none, all or early:K, got '" + spec + "'");
}

GuidanceConfig default_guidance(int train_steps, int n_steps) {
  GuidanceConfig g;
  g.respacing = make_respacing(train_steps, n_steps);
  g.reg_steps = reg_steps_all(g.respacing);
  return g;
}

Tensor combine_guidance(const Tensor& cond, const Tensor* rec, const Tensor* uncond, double w1, double w2) {
  if ((w1 != 0.0 && !rec) || (w2 != 0.0 && !uncond)) throw std::invalid_argument("combine_guidance: missing branch");
  if ((rec && rec->shape() != cond.shape()) || (uncond && uncond->shape() != cond.shape())) {
    throw ShapeError("combine_guidance: branch shapes differ from " + shape_str(cond.shape()));
  }
  if (w1 == 0.0 && w2 == 0.0) return cond;
  Tensor out(cond.shape());
  for (std::int64_t i = 0; i < cond.numel(); ++i) {
    const double c = cond[i];
    double v = c;
    if (w1 != 0.0) v += w1 * (c - (*rec)[i]);
    if (w2 != 0.0) v += w2 * (c - (*uncond)[i]);
    out[i] = static_cast<Real>(v);
  }
  return out;
}

namespace {

Tensor stack_rows(const std::vector<const Tensor*>& parts) {
  Shape shape = parts.front()->shape();
  std::int64_t rows = 0;
  for (const Tensor* p : parts) rows += p->dim(0);
  shape[0] = rows;
  Tensor out(shape);
  Real* dst = out.ptr();
  for (const Tensor* p : parts) {
    std::memcpy(dst, p->ptr(), static_cast<std::size_t>(p->numel()) * sizeof(Real));
    dst += p->numel();
  }
  return out;
}

Tensor take_rows(const Tensor& x, std::int64_t start, std::int64_t count) {
  Shape shape = x.shape();
  const std::int64_t row = x.numel() / shape[0];
  shape[0] = count;
  Tensor out(shape);
  std::memcpy(out.ptr(), x.ptr() + start * row, static_cast<std::size_t>(count * row) * sizeof(Real));
  return out;
}

void note_tape(SampleTrace* trace, const Tape& tape) {
  if (!trace) return;
  trace->max_tape_nodes = std::max(trace->max_tape_nodes, tape.size());
  trace->recorded_ops += tape.recorded_ops();
}

}  // namespace

GuidanceModels guidance_models(const ModelBundle& model, SampleTrace* trace) {
  GuidanceModels m;
  m.denoise = [&model, trace](const Tensor& x, std::span<const int> t, const Tensor& z,
                              std::span<const std::uint8_t> mask) {
    Tape tape(Tape::Mode::no_grad);
    Tensor out = model.denoise(tape, tape.constant(x), t, tape.constant(z), mask).value();
    note_tape(trace, tape);
    return out;
  };
  m.encode = [&model, trace](const Tensor& x, std::span<const std::uint8_t> mask) {
    Tape tape(Tape::Mode::no_grad);
    Tensor out = model.encode_motion(tape, tape.constant(x), mask).value();
    note_tape(trace, tape);
    return out;
  };
  return m;
}

Tensor guided_estimate(const GuidanceModels& models, const Tensor& x_t, int t, const Tensor& z_cond,
                       std::span<const std::uint8_t> mask, SamplerState& state, const GuidanceConfig& cfg,
                       SampleTrace* trace) {
  const std::int64_t N = x_t.dim(0);
  const double w1 = cfg.reg_active(t) ? cfg.w1 : 0.0;
  const double w2 = cfg.w2;
  if (w1 != 0.0 && !state.prev_estimate) {
    throw std::logic_error("guided_estimate: reconstructive guidance at t=" + std::to_string(t) +
                           " without a previous estimate");
  }
  if (w1 != 0.0 && !state.prev_latent) {
    state.prev_latent = models.encode(*state.prev_estimate, mask);
    if (trace) trace->encoder_rows += N;
  }

  std::vector<const Tensor*> xs = {&x_t}, zs = {&z_cond};
  const Tensor zeros(z_cond.shape());
  if (w1 != 0.0) {
    xs.push_back(&x_t);
    zs.push_back(&*state.prev_latent);
  }
  if (w2 != 0.0) {
    xs.push_back(&x_t);
    zs.push_back(&zeros);
  }
  const std::int64_t branches = static_cast<std::int64_t>(xs.size());
  std::vector<std::uint8_t> full_mask;
  for (std::int64_t b = 0; b < branches; ++b) full_mask.insert(full_mask.end(), mask.begin(), mask.end());
  const std::vector<int> ts(static_cast<std::size_t>(N * branches), t);

  const Tensor out = models.denoise(stack_rows(xs), ts, stack_rows(zs), full_mask);
  if (trace) trace->denoiser_rows += N * branches;

  const Tensor cond = take_rows(out, 0, N);
  std::optional<Tensor> rec, uncond;
  std::int64_t next = N;
  if (w1 != 0.0) {
    rec = take_rows(out, next, N);
    next += N;
  }
  if (w2 != 0.0) uncond = take_rows(out, next, N);
  return combine_guidance(cond, rec ? &*rec : nullptr, uncond ? &*uncond : nullptr, w1, w2);
}

Tensor guided_estimate(const ModelBundle& model, const Tensor& x_t, int t, const Tensor& z_cond,
                       std::span<const std::uint8_t> mask, SamplerState& state, const GuidanceConfig& cfg,
                       SampleTrace* trace) {
  return guided_estimate(guidance_models(model, trace), x_t, t, z_cond, mask, state, cfg, trace);
}

std::vector<MotionSequence> sample_many(const ModelBundle& model, std::span<const SampleRequest> requests,
                                        const NoiseSchedule& schedule, const GuidanceConfig& cfg, int fps,
                                        SampleTrace* trace) {
  cfg.validate();
  if (requests.empty()) return {};
  if (schedule.steps != model.config().train_steps) {
    throw std::invalid_argument("sample: schedule has " + std::to_string(schedule.steps) + " steps, model expects " +
                                std::to_string(model.config().train_steps));
  }
  const std::int64_t N = static_cast<std::int64_t>(requests.size());
  const std::int64_t d = model.config().frame_dims;
  std::int64_t L = 0, Lt = 0;
  for (const auto& r : requests) {
    r.script.validate();
    if (r.length <= 0) throw std::invalid_argument("sample: length must be positive");
    L = std::max<std::int64_t>(L, r.length);
    Lt = std::max<std::int64_t>(Lt, static_cast<std::int64_t>(r.script.tokens.size()));
  }

  std::vector<std::uint8_t> mask(static_cast<std::size_t>(N * L), 0);
  std::vector<std::int64_t> ids(static_cast<std::size_t>(N * Lt), 0);
  std::vector<std::uint8_t> token_mask(static_cast<std::size_t>(N * Lt), 0);
  std::vector<Rng> rngs;
  Tensor x({N, L, d});
  for (std::int64_t n = 0; n < N; ++n) {
    const auto& r = requests[static_cast<std::size_t>(n)];
    std::fill_n(mask.begin() + n * L, r.length, std::uint8_t{1});
    for (std::size_t k = 0; k < r.script.tokens.size(); ++k) {
      ids[static_cast<std::size_t>(n * Lt) + k] = r.script.tokens[k];
      token_mask[static_cast<std::size_t>(n * Lt) + k] = 1;
    }
    rngs.push_back(Rng::stream(r.seed, "sampler"));
    Real* row = x.ptr() + n * L * d;
    for (std::int64_t i = 0; i < r.length * d; ++i) row[i] = static_cast<Real>(rngs.back().normal());
  }

  Tensor z_cond;
  {
    Tape tape(Tape::Mode::no_grad);
    z_cond = model.encode_condition(tape, ids, token_mask, N).value();
    note_tape(trace, tape);
  }

  SamplerState state;
  const GuidanceModels models = guidance_models(model, trace);
  const auto& plan = cfg.respacing.indices;
  Tensor x0_hat;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const int from = plan[i];
    if (from >= schedule.steps) throw std::invalid_argument("sample: plan index beyond schedule");
    x0_hat = guided_estimate(models, x, from, z_cond, mask, state, cfg, trace);
    if (cfg.clamp > 0) {
      for (auto& v : x0_hat.data()) v = std::clamp(v, static_cast<Real>(-cfg.clamp), static_cast<Real>(cfg.clamp));
    }
    if (trace) ++trace->steps;
    state.prev_estimate = x0_hat;
    state.prev_latent.reset();
    if (i + 1 == plan.size()) break;

    const PosteriorCoefficients c = posterior_coefficients(schedule.alpha_bar[from], schedule.alpha_bar[plan[i + 1]]);
    const double sd = std::sqrt(c.variance);
    Tensor next({N, L, d});
    for (std::int64_t n = 0; n < N; ++n) {
      const std::int64_t valid = requests[static_cast<std::size_t>(n)].length * d;
      const std::int64_t off = n * L * d;
      Rng& rng = rngs[static_cast<std::size_t>(n)];
      for (std::int64_t k = 0; k < valid; ++k) {
        const double z = rng.normal();
        next[off + k] = static_cast<Real>(c.coef_x0 * x0_hat[off + k] + c.coef_xt * x[off + k] + sd * z);
      }
    }
    x = std::move(next);
  }

  std::vector<MotionSequence> out;
  out.reserve(requests.size());
  for (std::int64_t n = 0; n < N; ++n) {
    const auto& r = requests[static_cast<std::size_t>(n)];
    out.push_back(unpack(x0_hat, n, r.length, fps, r.script));
  }
  return out;
}

MotionSequence sample(const ModelBundle& model, const ActionScript& script, int length, const NoiseSchedule& schedule,
                      const GuidanceConfig& cfg, std::uint64_t seed, int fps, SampleTrace* trace) {
  const SampleRequest req{script, length, seed};
  return sample_many(model, std::span<const SampleRequest>(&req, 1), schedule, cfg, fps, trace).front();
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

AitsResult measure_aits(const ModelBundle& model, std::span<const SampleRequest> prompts, const NoiseSchedule& schedule,
                        const GuidanceConfig& cfg, int fps) {
  if (prompts.empty()) throw std::invalid_argument("measure_aits: empty prompt list");
  AitsResult r;
  for (const auto& p : prompts) {
    const auto start = Clock::now();
    (void)sample(model, p.script, p.length, schedule, cfg, p.seed, fps);
    r.per_prompt.push_back(seconds_since(start));
  }
  double sum = 0;
  for (double s : r.per_prompt) sum += s;
  r.seconds_per_prompt = sum / static_cast<double>(r.per_prompt.size());
  return r;
}

RegOverhead measure_reg_overhead(const ModelBundle& model, std::span<const SampleRequest> prompts,
                                 const NoiseSchedule& schedule, const GuidanceConfig& cfg, int fps, int repeats) {
  if (prompts.empty()) throw std::invalid_argument("measure_reg_overhead: empty prompt list");
  GuidanceConfig none = cfg, all = cfg;
  none.reg_steps.clear();
  all.reg_steps = reg_steps_all(cfg.respacing);
  if (all.w1 == 0.0) all.w1 = 1.0;
  const double n_steps = static_cast<double>(cfg.respacing.indices.size());
  const double n_reg = static_cast<double>(all.reg_steps.size());
  if (n_reg == 0) throw std::invalid_argument("measure_reg_overhead: plan has no eligible reg steps");

  RegOverhead o;
  // Interleave the two settings and keep the fastest repeat of each to damp scheduler noise.
  o.aits_none = o.aits_all = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < std::max(1, repeats); ++rep) {
    o.aits_none = std::min(o.aits_none, measure_aits(model, prompts, schedule, none, fps).seconds_per_prompt);
    o.aits_all = std::min(o.aits_all, measure_aits(model, prompts, schedule, all, fps).seconds_per_prompt);
  }
  o.step_baseline = o.aits_none / n_steps;
  o.step_reg = (o.aits_all - o.step_baseline * (n_steps - n_reg)) / n_reg;

  // Isolated batch-1 passes over the same prompt lengths.
  double d_best = std::numeric_limits<double>::infinity(), e_best = d_best;
  const int d = model.config().frame_dims;
  for (int rep = 0; rep < std::max(1, repeats); ++rep) {
    double d_sum = 0, e_sum = 0;
    for (const auto& p : prompts) {
      Rng rng = Rng::stream(p.seed, "bench");
      Tensor x({1, p.length, d});
      for (auto& v : x.data()) v = static_cast<Real>(rng.normal());
      const std::vector<std::uint8_t> mask(static_cast<std::size_t>(p.length), 1);
      const Tensor z({1, model.config().latent_dim});
      const std::vector<int> t = {cfg.respacing.indices.back()};
      const int reps = static_cast<int>(n_steps);
      auto s0 = Clock::now();
      for (int k = 0; k < reps; ++k) {
        Tape tape(Tape::Mode::no_grad);
        (void)model.denoise(tape, tape.constant(x), t, tape.constant(z), mask);
      }
      d_sum += seconds_since(s0) / reps;
      s0 = Clock::now();
      for (int k = 0; k < reps; ++k) {
        Tape tape(Tape::Mode::no_grad);
        (void)model.encode_motion(tape, tape.constant(x), mask);
      }
      e_sum += seconds_since(s0) / reps;
    }
    d_best = std::min(d_best, d_sum / static_cast<double>(prompts.size()));
    e_best = std::min(e_best, e_sum / static_cast<double>(prompts.size()));
  }
  o.denoiser_pass = d_best;
  o.encoder_pass = e_best;
  o.predicted_step_reg = o.step_baseline + o.denoiser_pass + o.encoder_pass;
  o.relative_error = std::abs(o.step_reg - o.predicted_step_reg) / o.predicted_step_reg;
  return o;
}

}  // namespace ram
