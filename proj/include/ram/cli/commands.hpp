// SPDX-License-Identifier: Apache-2.0
// Subcommand implementations shared by the executable and the tests.
#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ram/cli/checkpoint.hpp"
#include "ram/cli/config.hpp"

namespace ram {

/// Raised for malformed command-line input.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ErrorCategory {
  std::string name;
  int exit_code = 1;
};

/// usage 2, config 3, io 4, format 5, numeric 6, evaluator 7, internal 1.
ErrorCategory classify(const std::exception& e);

/// Stamps config hash and code version onto an artifact.
void stamp(nlohmann::json& j, const RunConfig& config);

// ---- Dataset on disk -------------------------------------------------------
//
// <dir>/manifest.json  stats, counts, dataset key
// <dir>/{train,val,test}.ramd  "RAMD" u32 version u32 count, then per sequence
//                              u32 size + one motion file blob (normalized units)

inline constexpr std::uint32_t kDatasetFileVersion = 1;

/// Identity of the generated data: synthesis settings, size, split and seed.
std::uint64_t dataset_key(const RunConfig& config);
void write_dataset(const std::filesystem::path& dir, const Dataset& data, const RunConfig& config);
/// Reads or, when `dir` holds no manifest, regenerates. A manifest with a
/// different key raises ConfigError.
Dataset load_dataset(const RunConfig& config);

// ---- Commands --------------------------------------------------------------

void cmd_gen_data(const RunConfig& config, std::ostream& out);

struct TrainCommand {
  bool resume = false;
  std::string resume_from;   // empty: <out_dir>/last.ramc
  std::int64_t max_steps = -1;  // stop early (still checkpoints); -1 runs to config.train.steps
};
/// Trains (and on first use, the evaluator) and writes checkpoints plus train_log.jsonl.
/// Returns the final step.
std::int64_t cmd_train(const RunConfig& config, const TrainCommand& cmd, std::ostream& out);

/// Inference flags that override the checkpoint's guidance section.
struct GuidanceOverrides {
  std::optional<double> w1, w2;
  std::optional<std::string> reg_steps;
  std::optional<int> steps;
};
RunConfig apply_overrides(RunConfig config, const GuidanceOverrides& o);

struct SampleCommand {
  std::string checkpoint;
  std::string script;
  int length = 0;  // 0: drawn like the data generator would
  std::uint64_t seed = 0;
  std::string out;
  GuidanceOverrides guidance;
};
/// Writes a motion file in raw (denormalized) units.
MotionSequence cmd_sample(const SampleCommand& cmd, std::ostream& out);

struct EvalCommand {
  std::string checkpoint;
  std::string evaluator;  // empty: evaluator.ramc beside the checkpoint
  std::string out;        // empty: <out_dir>/eval.json
  std::optional<std::uint64_t> seed;
  std::optional<int> n_samples;
  GuidanceOverrides guidance;
};
nlohmann::json cmd_eval(const EvalCommand& cmd, std::ostream& out);

struct SweepCommand {
  std::string checkpoint;
  std::string evaluator;
  std::string axis;  // w1w2, beta-tau, loss-weights, d_E, reg-steps, variant
  std::string out;   // empty: <out_dir>/sweep_<axis>.csv
  std::optional<std::int64_t> train_steps;  // retraining budget for training-time axes
  std::optional<int> n_samples;
};
/// One CSV row per configuration.
std::string cmd_sweep(const SweepCommand& cmd, std::ostream& out);

/// Axis settings as (label, config) pairs derived from `base`.
std::vector<std::pair<std::string, RunConfig>> sweep_settings(const RunConfig& base, const std::string& axis);
bool sweep_requires_training(const std::string& axis);

struct BenchCommand {
  std::string checkpoint;
  int prompts = 20;
  int repeats = 3;
  std::string out;  // empty: <out_dir>/aits.json
  GuidanceOverrides guidance;
};
nlohmann::json cmd_bench_aits(const BenchCommand& cmd, std::ostream& out);

}  // namespace ram
