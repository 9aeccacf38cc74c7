// SPDX-License-Identifier: Apache-2.0
// Procedural text/motion stand-in: action scripts over a fixed vocabulary
// rendered into low-dimensional root/limb trajectories.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ram/numerics/tensor.hpp"

namespace ram {

enum class Action : std::uint16_t { walk_fwd, walk_back, turn_left, turn_right, sit, stand, wave, jump };

inline constexpr int kNumActions = 8;
inline constexpr int kMaxScriptLength = 4;
const char* action_name(Action a);
/// Parses a comma- or space-separated list of action names ("walk-fwd,sit").
std::vector<std::uint16_t> parse_script(const std::string& text);
std::string script_to_string(std::span<const std::uint16_t> tokens);

// Feature channels.
enum Channel : int { kRootX, kRootY, kHeading, kVertical, kLimbSin, kLimbCos, kArm, kBend, kNumChannels };

struct ActionScript {
  std::vector<std::uint16_t> tokens;
  /// Throws std::invalid_argument unless 1..kMaxScriptLength tokens, all in vocabulary.
  void validate() const;
  friend bool operator==(const ActionScript&, const ActionScript&) = default;
};

/// `length` frames of `dims` channels, row-major. Frames with mask 0 are zero.
struct MotionSequence {
  int length = 0;
  int dims = kNumChannels;
  int fps = 20;
  std::vector<float> frames;
  std::vector<std::uint8_t> mask;
  ActionScript script;

  int valid_frames() const;
  float at(int frame, int channel) const { return frames[static_cast<std::size_t>(frame * dims + channel)]; }
};

struct SynthConfig {
  int fps = 20;
  int min_len = 40;
  int max_len = 196;
  double action_seconds_min = 1.2;
  double action_seconds_max = 2.0;
  double blend_seconds = 0.3;
  double walk_speed = 1.2;      // metres per second
  double step_hz = 1.8;         // gait cycles per second
  double turn_angle = 1.5707963267948966;
  double sit_depth = 0.45;
  double jump_height = 0.35;
  double wave_hz = 2.5;
  double speed_jitter = 0.1;    // +- relative
};

/// Per-frame root speed used for walk-fwd before jitter.
double step_speed(const SynthConfig& config);

/// Deterministic in (script, seed).
MotionSequence generate(const ActionScript& script, std::uint64_t seed, const SynthConfig& config = {});

struct DatasetStats {
  std::array<double, kNumChannels> mean{};
  std::array<double, kNumChannels> stddev{};
  std::array<bool, kNumChannels> constant{};
};

inline constexpr double kConstantChannelStd = 1e-8;

DatasetStats compute_stats(std::span<const MotionSequence> sequences);
MotionSequence normalize(const MotionSequence& seq, const DatasetStats& stats);
MotionSequence denormalize(const MotionSequence& seq, const DatasetStats& stats);

struct SplitRatios {
  double train = 2000.0 / 2400.0;
  double val = 200.0 / 2400.0;
  double test = 200.0 / 2400.0;
};

struct SampleOrigin {
  std::uint64_t seed = 0;
  std::size_t index = 0;
};

/// Raw and normalized sequences of all splits; stats come from train only.
struct Dataset {
  SynthConfig config;
  DatasetStats stats;
  std::vector<MotionSequence> train, val, test;  // normalized
  std::vector<SampleOrigin> train_origin, val_origin, test_origin;
};

Dataset build_dataset(int n, SplitRatios ratios, std::uint64_t seed, const SynthConfig& config = {});
/// Script drawn for sample `index`: length uniform in 1..4, tokens uniform.
ActionScript sample_script(std::uint64_t seed, std::size_t index);

// ---- Padded batches ------------------------------------------------------

struct MotionBatch {
  std::int64_t batch = 0;
  std::int64_t frames = 0;  // padded length
  std::int64_t dims = 0;
  Tensor x;                         // [B, frames, dims]
  std::vector<std::uint8_t> mask;   // [B * frames]
  std::vector<int> lengths;
  std::int64_t tokens = 0;          // padded script length
  std::vector<std::int64_t> token_ids;    // [B * tokens], padding uses id 0
  std::vector<std::uint8_t> token_mask;   // [B * tokens]
};

MotionBatch make_batch(std::span<const MotionSequence> pool, std::span<const std::size_t> indices);
MotionBatch make_batch(std::span<const MotionSequence> sequences);
/// Unpacks row `b` of a [B, frames, dims] tensor into a sequence of `length` frames.
MotionSequence unpack(const Tensor& x, std::int64_t b, int length, int fps, const ActionScript& script);

// ---- On-disk format ------------------------------------------------------
//
// Little endian: "RAMM", u32 version, u32 length, u32 dims, u32 fps,
// length*dims f32 frames, length u8 mask, u16 script length, u16 token ids.

inline constexpr std::uint32_t kMotionFileVersion = 1;

std::vector<std::uint8_t> encode_motion_file(const MotionSequence& seq);
MotionSequence decode_motion_file(std::span<const std::uint8_t> bytes);
void write_motion_file(const std::filesystem::path& path, const MotionSequence& seq);
MotionSequence read_motion_file(const std::filesystem::path& path);

}  // namespace ram
