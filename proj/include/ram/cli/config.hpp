// SPDX-License-Identifier: Apache-2.0
// Run configuration: JSON schema, presets, environment overrides.
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

#include "ram/eval/evaluator.hpp"
#include "ram/eval/report.hpp"
#include "ram/model/networks.hpp"
#include "ram/objectives.hpp"
#include "ram/sampler.hpp"
#include "ram/synthdata.hpp"

namespace ram {

/// Raised for malformed, unknown or out-of-range configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataSection {
  std::string dir = "data";
  int n = 2400;
  SplitRatios split;
  SynthConfig synth;
};

struct TrainSection {
  std::int64_t steps = 3000;
  int batch_size = 32;
  double lr = 1e-3;
  int warmup_steps = 100;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  std::int64_t checkpoint_every = 500;
  std::int64_t log_every = 10;
};

struct GuidanceSection {
  double w1 = 5.0;
  double w2 = 1.5;
  std::string reg_steps = "all";
  double clamp = 0.0;
};

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  std::string schedule = "cosine";
  int train_steps = 50;      // T of the forward process
  int inference_steps = 20;
  DataSection data;
  ModelConfig model;
  LossConfig loss;
  TrainSection train;
  GuidanceSection guidance;
  EvaluatorConfig evaluator;
  EvalOptions eval;

  /// Throws ConfigError on any inconsistency.
  void validate() const;
  NoiseSchedule make_noise_schedule() const;
  GuidanceConfig make_guidance() const;
  TrainOptions train_options() const;
  AdamConfig adam() const;
};

/// Reduced sizes that train in minutes on one CPU core; reconstructive guidance
/// weight 2, since the paper preset's 5 overshoots at this scale.
RunConfig desk_preset();
/// Full-scale sizes (T=50, d_E=256, width 512, 6/8 layers, fps 20, lengths 40..196).
RunConfig paper_preset();
RunConfig preset(const std::string& name);

nlohmann::json to_json(const RunConfig& c);
/// Overlays `j` onto the preset it names (default "desk"). Unknown keys and
/// type mismatches raise ConfigError naming the JSON path.
RunConfig from_json(const nlohmann::json& j);

/// Applies RAM_<SECTION>__<KEY>=value variables to `j`; values are parsed as
/// JSON when possible and kept as strings otherwise.
void apply_env_overrides(nlohmann::json& j, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> environment();

RunConfig load_config(const std::string& path, const std::map<std::string, std::string>& env);

/// Hash of every setting except the data and output locations.
std::uint64_t config_hash(const RunConfig& c);

inline constexpr const char* kEnvPrefix = "RAM_";

}  // namespace ram
