// SPDX-License-Identifier: Apache-2.0
#include "ram/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ram {

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "A") return Variant::A;
  if (name == "B") return Variant::B;
  if (name == "C") return Variant::C;
  if (name == "D") return Variant::D;
  if (name == "E") return Variant::E;
  throw std::invalid_argument("unknown variant '" + name + "' (expected full, A, B, C, D or E)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::A: return "A";
    case Variant::B: return "B";
    case Variant::C: return "C";
    case Variant::D: return "D";
    case Variant::E: return "E";
  }
  return "?";
}

void LossConfig::validate() const {
  if (w_sr < 0 || w_latent < 0) throw std::invalid_argument("loss config: weights must be non-negative");
  if (beta < 0 || beta > 1) throw std::invalid_argument("loss config: beta must lie in [0, 1]");
  if (!(tau > 0)) throw std::invalid_argument("loss config: tau must be positive");
  if (cond_dropout < 0 || cond_dropout >= 1) throw std::invalid_argument("loss config: cond_dropout must lie in [0, 1)");
}

Var masked_mse(const Var& pred, const Var& target, std::span<const std::uint8_t> mask) {
  if (pred.shape() != target.shape() || pred.value().rank() != 3) {
    throw ShapeError("masked_mse: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  const std::int64_t B = pred.dim(0), L = pred.dim(1), C = pred.dim(2);
  if (static_cast<std::int64_t>(mask.size()) != B * L) throw ShapeError("masked_mse: mask does not cover batch");
  Tensor w(pred.shape());
  for (std::int64_t b = 0; b < B; ++b) {
    std::int64_t n = 0;
    for (std::int64_t l = 0; l < L; ++l) n += mask[static_cast<std::size_t>(b * L + l)] ? 1 : 0;
    if (n == 0) throw std::invalid_argument("masked_mse: row " + std::to_string(b) + " has no valid frames");
    const Real wb = static_cast<Real>(1.0 / (static_cast<double>(n) * static_cast<double>(B)));
    for (std::int64_t l = 0; l < L; ++l) {
      if (!mask[static_cast<std::size_t>(b * L + l)]) continue;
      std::fill_n(w.ptr() + (b * L + l) * C, C, wb);
    }
  }
  Tape& tape = pred.tape();
  return ops::sum(ops::mul(ops::square(ops::sub(pred, target)), tape.constant(std::move(w))));
}

namespace {

Tensor identity(std::int64_t n, Real scale) {
  Tensor eye({n, n});
  for (std::int64_t i = 0; i < n; ++i) eye[i * n + i] = scale;
  return eye;
}

// -mean_i log_softmax(logits)_ii
Var diagonal_ce(const Var& logits) {
  const std::int64_t B = logits.dim(0);
  return ops::sum(ops::mul(ops::log_softmax(logits), logits.tape().constant(identity(B, Real(-1.0 / B)))));
}

}  // namespace

Var loss_sr(const Var& z_m, double tau) {
  if (z_m.value().rank() != 2) throw ShapeError("loss_sr: expected [B,E], got " + shape_str(z_m.shape()));
  if (z_m.dim(0) < 2) throw std::invalid_argument("loss_sr: batch size must be at least 2");
  const Var zn = ops::l2_normalize(z_m);
  const Var sim = ops::scale(ops::matmul(zn, ops::transpose(zn)), static_cast<Real>(1.0 / tau));
  return diagonal_ce(sim);
}

Var loss_latent(const Var& z_t, const Var& z_m, double beta) {
  if (z_t.shape() != z_m.shape() || z_t.value().rank() != 2) {
    throw ShapeError("loss_latent: " + shape_str(z_t.shape()) + " vs " + shape_str(z_m.shape()));
  }
  const Var target =
      ops::add(ops::scale(ops::stop_gradient(z_m), static_cast<Real>(1.0 - beta)), ops::scale(z_m, static_cast<Real>(beta)));
  return ops::scale(ops::sum(ops::square(ops::sub(z_t, target))), static_cast<Real>(1.0 / z_t.dim(0)));
}

Var loss_contrastive(const Var& a, const Var& b, double tau) {
  if (a.shape() != b.shape() || a.value().rank() != 2) {
    throw ShapeError("loss_contrastive: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const Var logits = ops::scale(ops::matmul(ops::l2_normalize(a), ops::transpose(ops::l2_normalize(b))),
                                static_cast<Real>(1.0 / tau));
  return ops::scale(ops::add(diagonal_ce(logits), diagonal_ce(ops::transpose(logits))), Real(0.5));
}

std::vector<std::uint8_t> draw_dropout(std::int64_t rows, double p, std::uint64_t seed, std::int64_t step) {
  Rng rng = Rng::stream(seed, "dropout", static_cast<std::uint64_t>(step));
  std::vector<std::uint8_t> out(static_cast<std::size_t>(rows));
  for (auto& d : out) d = rng.uniform() < p ? 1 : 0;
  return out;
}

StepDraws draw_step(const MotionBatch& batch, const NoiseSchedule& schedule, double cond_dropout, std::uint64_t seed,
                    std::int64_t step) {
  StepDraws d;
  Rng rng = Rng::stream(seed, "noise", static_cast<std::uint64_t>(step));
  d.t.resize(static_cast<std::size_t>(batch.batch));
  for (auto& t : d.t) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.steps)));
  d.eps = Tensor(batch.x.shape());
  for (auto& e : d.eps.data()) e = static_cast<Real>(rng.normal());
  d.dropped = draw_dropout(batch.batch, cond_dropout, seed, step);
  return d;
}

LossReport LossTerms::report() const {
  LossReport r;
  r.l_rec = rec.value().item();
  r.l_gen = gen.value().item();
  r.l_sr = sr.valid() ? static_cast<double>(sr.value().item()) : 0.0;
  r.l_latent = latent.value().item();
  r.l_contrastive = contrastive.valid() ? static_cast<double>(contrastive.value().item()) : 0.0;
  r.l_overall = overall.value().item();
  return r;
}

namespace {

// Per-row noising at individual timesteps.
Tensor noise_batch(const NoiseSchedule& schedule, const MotionBatch& batch, const StepDraws& draws) {
  Tensor out(batch.x.shape());
  const std::int64_t row = batch.frames * batch.dims;
  for (std::int64_t b = 0; b < batch.batch; ++b) {
    const int t = draws.t[static_cast<std::size_t>(b)];
    const double a = std::sqrt(schedule.alpha_bar[t]);
    const double s = std::sqrt(1.0 - schedule.alpha_bar[t]);
    for (std::int64_t l = 0; l < batch.frames; ++l) {
      if (!batch.mask[static_cast<std::size_t>(b * batch.frames + l)]) continue;
      for (std::int64_t c = 0; c < batch.dims; ++c) {
        const std::int64_t i = b * row + l * batch.dims + c;
        out[i] = static_cast<Real>(a * batch.x[i] + s * draws.eps[i]);
      }
    }
  }
  return out;
}

void check_finite(const char* name, const Var& v) {
  if (v.valid() && !std::isfinite(static_cast<double>(v.value().item()))) {
    throw NumericError(std::string("non-finite loss term ") + name + " = " + std::to_string(v.value().item()));
  }
}

}  // namespace

LossTerms compute_losses(Tape& tape, const ModelBundle& model, const MotionBatch& batch, const NoiseSchedule& schedule,
                         const LossConfig& config, const StepDraws& draws) {
  config.validate();
  if (static_cast<std::int64_t>(draws.t.size()) != batch.batch || draws.eps.shape() != batch.x.shape() ||
      static_cast<std::int64_t>(draws.dropped.size()) != batch.batch) {
    throw ShapeError("compute_losses: draws do not match batch");
  }
  const Var x0 = tape.constant(batch.x);
  const Var x_t = tape.constant(noise_batch(schedule, batch, draws));
  const Var z_m = model.encode_motion(tape, x0, batch.mask);
  const Var z_t = model.encode_condition(tape, batch.token_ids, batch.token_mask, batch.batch);

  Tensor keep({batch.batch, model.config().latent_dim});
  for (std::int64_t b = 0; b < batch.batch; ++b) {
    if (draws.dropped[static_cast<std::size_t>(b)]) continue;
    std::fill_n(keep.ptr() + b * model.config().latent_dim, model.config().latent_dim, Real(1));
  }
  const Var z_gen = ops::mul(z_t, tape.constant(std::move(keep)));

  LossTerms L;
  L.rec = masked_mse(model.denoise(tape, x_t, draws.t, z_m, batch.mask), x0, batch.mask);
  L.gen = masked_mse(model.denoise(tape, x_t, draws.t, z_gen, batch.mask), x0, batch.mask);
  if (batch.batch >= 2) L.sr = loss_sr(z_m, config.tau);
  L.contrastive = batch.batch >= 2 ? loss_contrastive(z_t, z_m, kContrastiveTau) : Var{};

  Var overall = ops::add(L.rec, L.gen);
  switch (config.variant) {
    case Variant::full:
      L.latent = loss_latent(z_t, z_m, config.beta);
      if (!L.sr.valid()) throw std::invalid_argument("compute_losses: full objective needs batch size >= 2");
      overall = ops::add(overall, ops::scale(L.sr, static_cast<Real>(config.w_sr)));
      overall = ops::add(overall, ops::scale(L.latent, static_cast<Real>(config.w_latent)));
      break;
    case Variant::A:
      L.latent = loss_latent(z_t, z_m, config.beta);
      break;
    case Variant::B:
    case Variant::C:
      L.latent = loss_latent(z_t, z_m, 1.0);
      overall = ops::add(overall, ops::scale(L.latent, config.variant == Variant::B ? Real(1.0) : Real(1e-5)));
      break;
    case Variant::D:
    case Variant::E:
      if (!L.contrastive.valid()) throw std::invalid_argument("compute_losses: contrastive variants need batch size >= 2");
      L.latent = loss_latent(z_t, z_m, 1.0);
      overall = ops::add(overall, ops::scale(L.contrastive, static_cast<Real>(kContrastiveWeight)));
      if (config.variant == Variant::E) overall = ops::add(overall, ops::scale(L.latent, Real(1e-5)));
      break;
  }
  L.overall = overall;
  check_finite("l_rec", L.rec);
  check_finite("l_gen", L.gen);
  check_finite("l_sr", L.sr);
  check_finite("l_latent", L.latent);
  check_finite("l_contrastive", L.contrastive);
  check_finite("l_overall", L.overall);
  return L;
}

LossReport train_step(ModelBundle& model, Adam& optimizer, const MotionBatch& batch, const NoiseSchedule& schedule,
                      const LossConfig& config, const StepDraws& draws) {
  Tape tape;
  const LossTerms terms = compute_losses(tape, model, batch, schedule, config, draws);
  const LossReport report = terms.report();
  const Gradients grads = tape.backward(terms.overall);
  std::vector<Parameter*> params = model.params().all();
  optimizer.step(params, grads);
  return report;
}

std::vector<std::size_t> batch_indices(std::size_t pool, int batch_size, std::uint64_t seed, std::int64_t step) {
  if (batch_size <= 0 || static_cast<std::size_t>(batch_size) > pool) {
    throw std::invalid_argument("batch_indices: batch size " + std::to_string(batch_size) + " exceeds pool of " +
                                std::to_string(pool));
  }
  Rng rng = Rng::stream(seed, "batch", static_cast<std::uint64_t>(step));
  std::vector<std::size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (int i = 0; i < batch_size; ++i) {
    const std::size_t j = static_cast<std::size_t>(i) + rng.below(pool - static_cast<std::size_t>(i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(batch_size));
  return idx;
}

void train(ModelBundle& model, Adam& optimizer, std::span<const MotionSequence> train_set, const NoiseSchedule& schedule,
           const LossConfig& loss, const TrainOptions& options, std::int64_t end_step, const StepCallback& on_step) {
  for (std::int64_t step = optimizer.steps(); step < end_step; ++step) {
    const double warm = options.warmup_steps > 0 ? std::min(1.0, (step + 1.0) / options.warmup_steps) : 1.0;
    optimizer.set_lr(options.lr * warm);
    const auto idx = batch_indices(train_set.size(), options.batch_size, options.seed, step);
    const MotionBatch batch = make_batch(train_set, idx);
    const StepDraws draws = draw_step(batch, schedule, loss.cond_dropout, options.seed, step);
    const LossReport r = train_step(model, optimizer, batch, schedule, loss, draws);
    if (on_step) on_step(step, r);
  }
}

}  // namespace ram
