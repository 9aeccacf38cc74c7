// SPDX-License-Identifier: Apache-2.0
// Contrastive motion/script feature extractor used only for evaluation.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>

#include "ram/eval/metrics.hpp"
#include "ram/model/layers.hpp"
#include "ram/synthdata.hpp"

namespace ram {

struct EvaluatorConfig {
  int width = 64;
  int layers = 2;
  int heads = 4;
  int ff_mult = 2;
  int embed_dim = 64;
  int token_dim = 32;
  double tau = 0.1;
  int steps = 1500;
  int batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Raised when evaluator weights differ from the hash recorded at freeze time.
class EvaluatorChanged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Evaluator {
 public:
  Evaluator(const EvaluatorConfig& config, int frame_dims);
  Evaluator(const Evaluator&) = delete;
  Evaluator& operator=(const Evaluator&) = delete;
  Evaluator(Evaluator&&) = default;
  Evaluator& operator=(Evaluator&&) = default;

  const EvaluatorConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// Unit-norm embeddings [B, embed_dim] on the given tape.
  Var embed_motion(Tape& tape, const MotionBatch& batch) const;
  Var embed_script(Tape& tape, const MotionBatch& batch) const;

  /// Features of normalized sequences; verifies the frozen hash first.
  Features motion_features(std::span<const MotionSequence> seqs) const;
  Features script_features(std::span<const ActionScript> scripts) const;

  std::uint64_t hash() const { return params_.hash(); }
  void freeze() { frozen_hash_ = hash(); frozen_ = true; }
  bool frozen() const { return frozen_; }
  std::uint64_t frozen_hash() const { return frozen_hash_; }
  /// Throws EvaluatorChanged when frozen and the weights have moved.
  void check() const;

 private:
  EvaluatorConfig config_;
  int frame_dims_;
  ParameterStore params_;
  SequenceEncoder motion_enc_, script_enc_;
  Linear motion_head_, script_head_;
  const Parameter* token_table_ = nullptr;
  bool frozen_ = false;
  std::uint64_t frozen_hash_ = 0;
};

/// Symmetric InfoNCE on (script, motion) pairs of the training split, then freeze.
/// Returns the mean loss over the last tenth of steps.
double train_evaluator(Evaluator& ev, std::span<const MotionSequence> train_set,
                       const std::function<void(int step, double loss)>& on_step = {});

}  // namespace ram
