// SPDX-License-Identifier: Apache-2.0
#include "ram/eval/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ram/io.hpp"
#include "ram/numerics/optim.hpp"
#include "ram/objectives.hpp"

namespace ram {

namespace {

constexpr std::size_t kFeatureChunk = 64;

Features to_features(const Tensor& t) {
  Features f(t.dim(0), t.dim(1));
  for (std::int64_t i = 0; i < t.numel(); ++i) f.data[static_cast<std::size_t>(i)] = t[i];
  return f;
}

void append(Features& dst, const Features& src) {
  if (dst.dim == 0) dst.dim = src.dim;
  dst.n += src.n;
  dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
}

}  // namespace

Evaluator::Evaluator(const EvaluatorConfig& config, int frame_dims) : config_(config), frame_dims_(frame_dims) {
  Rng rng = Rng::stream(config_.seed, "evaluator-init");
  motion_enc_ = SequenceEncoder::create(params_, "ev_m", frame_dims, config_.width, config_.layers, config_.heads,
                                        config_.ff_mult, rng);
  motion_head_ = Linear::create(params_, "ev_m/head", config_.width, config_.embed_dim, rng);
  token_table_ = &params_.add("ev_t/token_table/weight", normal_init({kNumActions, config_.token_dim}, 1.0, rng));
  script_enc_ = SequenceEncoder::create(params_, "ev_t", config_.token_dim, config_.width, config_.layers, config_.heads,
                                        config_.ff_mult, rng);
  script_head_ = Linear::create(params_, "ev_t/head", config_.width, config_.embed_dim, rng);
}

Var Evaluator::embed_motion(Tape& tape, const MotionBatch& batch) const {
  return ops::l2_normalize(motion_head_(tape, motion_enc_(tape, tape.constant(batch.x), batch.mask)));
}

Var Evaluator::embed_script(Tape& tape, const MotionBatch& batch) const {
  Var f = ops::reshape(ops::gather_rows(tape.param(*token_table_), batch.token_ids),
                       {batch.batch, batch.tokens, config_.token_dim});
  return ops::l2_normalize(script_head_(tape, script_enc_(tape, f, batch.token_mask)));
}

void Evaluator::check() const {
  if (frozen_ && hash() != frozen_hash_) {
    throw EvaluatorChanged("evaluator weights changed since freeze (" + hex64(hash()) + " vs " + hex64(frozen_hash_) + ")");
  }
}

Features Evaluator::motion_features(std::span<const MotionSequence> seqs) const {
  check();
  Features out;
  for (std::size_t start = 0; start < seqs.size(); start += kFeatureChunk) {
    const auto chunk = seqs.subspan(start, std::min(kFeatureChunk, seqs.size() - start));
    const MotionBatch b = make_batch(chunk);
    Tape tape(Tape::Mode::no_grad);
    append(out, to_features(embed_motion(tape, b).value()));
  }
  return out;
}

Features Evaluator::script_features(std::span<const ActionScript> scripts) const {
  check();
  Features out;
  for (std::size_t start = 0; start < scripts.size(); start += kFeatureChunk) {
    const std::size_t n = std::min(kFeatureChunk, scripts.size() - start);
    std::vector<MotionSequence> holders(n);
    for (std::size_t i = 0; i < n; ++i) {
      holders[i].length = 1;
      holders[i].frames.assign(static_cast<std::size_t>(frame_dims_), 0.0f);
      holders[i].dims = frame_dims_;
      holders[i].mask = {1};
      holders[i].script = scripts[start + i];
      holders[i].script.validate();
    }
    const MotionBatch b = make_batch(holders);
    Tape tape(Tape::Mode::no_grad);
    append(out, to_features(embed_script(tape, b).value()));
  }
  return out;
}

double train_evaluator(Evaluator& ev, std::span<const MotionSequence> train_set,
                       const std::function<void(int, double)>& on_step) {
  const auto& cfg = ev.config();
  Adam opt(AdamConfig{.lr = cfg.lr});
  std::vector<Parameter*> params = ev.params().all();
  const int batch = std::min<int>(cfg.batch, static_cast<int>(train_set.size()));
  const int tail_from = cfg.steps - std::max(1, cfg.steps / 10);
  double tail = 0;
  int tail_n = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto idx = batch_indices(train_set.size(), batch, cfg.seed ^ 0xe7a1u, step);
    const MotionBatch b = make_batch(train_set, idx);
    Tape tape;
    const Var loss = loss_contrastive(ev.embed_script(tape, b), ev.embed_motion(tape, b), cfg.tau);
    const double v = loss.value().item();
    if (!std::isfinite(v)) throw NumericError("evaluator training diverged at step " + std::to_string(step));
    opt.step(params, tape.backward(loss));
    if (step >= tail_from) {
      tail += v;
      ++tail_n;
    }
    if (on_step) on_step(step, v);
  }
  ev.freeze();
  return tail_n ? tail / tail_n : 0.0;
}

}  // namespace ram
