// SPDX-License-Identifier: Apache-2.0
// End-to-end evaluation: sample, embed, score with bootstrap intervals.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ram/eval/evaluator.hpp"
#include "ram/sampler.hpp"

namespace ram {

struct MetricCI {
  double value = 0;
  double ci = 0;  // 95% half-width over bootstrap replications
};

struct EvalReport {
  MetricCI fid, rp1, rp2, rp3, mm_dist, diversity, multimodality;
  std::int64_t samples = 0;
  int bootstrap = 0;
  std::uint64_t evaluator_hash = 0;
};

inline constexpr int kBootstrapReplications = 20;

struct EvalOptions {
  int n_samples = 0;        // 0: one per test sequence
  int mm_scripts = 20;      // scripts used for multimodality
  int mm_repeats = kMultimodalityRepeats;
  int bootstrap = kBootstrapReplications;
  int diversity_pairs = kDiversityPairs;
  int sample_batch = 64;
  std::uint64_t seed = 0;
  int fps = 20;
};

/// Already-embedded evaluation material; rows of gen, real and script are
/// aligned pairs (gen[i] was conditioned on script[i], real[i] is its reference).
struct EvalFeatures {
  Features gen, real, script;
  std::vector<Features> mm_groups;
};

/// Metric values on the full sets plus bootstrap intervals from resampled pairs.
EvalReport score(const EvalFeatures& f, const EvalOptions& options);

/// One generation per test row (same script and length), sampler seed derived from (seed, row).
std::vector<MotionSequence> generate_for(const ModelBundle& model, std::span<const MotionSequence> refs,
                                         const NoiseSchedule& schedule, const GuidanceConfig& cfg,
                                         const EvalOptions& options, std::uint64_t stream);

EvalReport evaluate(const ModelBundle& model, const GuidanceConfig& cfg, const NoiseSchedule& schedule,
                    std::span<const MotionSequence> test, const Evaluator& evaluator, const EvalOptions& options);

/// Standard-normal sequences shaped like `refs`, a chance-level reference for FID.
std::vector<MotionSequence> noise_like(std::span<const MotionSequence> refs, std::uint64_t seed);

std::vector<ActionScript> scripts_of(std::span<const MotionSequence> seqs);

nlohmann::json report_json(const EvalReport& r);

}  // namespace ram
