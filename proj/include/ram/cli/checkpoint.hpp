// SPDX-License-Identifier: Apache-2.0
// RAMC checkpoint files.
//
// Layout (little-endian):
//   "RAMC" u32 version
//   str   config JSON
//   u32   tensor count, then per tensor: str name, u32 rank, u64 dims..., f32 data
//   u64   optimizer steps, u32 moment count, then per entry: str name, m tensor, v tensor
//   u64   training step
//   u64   evaluator hash (0 when none)
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ram/cli/config.hpp"
#include "ram/eval/evaluator.hpp"
#include "ram/model/networks.hpp"
#include "ram/numerics/optim.hpp"

namespace ram {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::unique_ptr<ModelBundle> model;
  Adam optimizer;
  std::int64_t step = 0;
  std::uint64_t evaluator_hash = 0;
};

std::vector<std::uint8_t> encode_checkpoint(const RunConfig& config, const ParameterStore& params, const Adam& opt,
                                            std::int64_t step, std::uint64_t evaluator_hash);
/// Rebuilds the model from the embedded config and loads every tensor; names
/// and shapes must match exactly.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& what = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const ModelBundle& model,
                     const Adam& opt, std::int64_t step, std::uint64_t evaluator_hash);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Evaluator weights in the same container; the optimizer section is empty.
void save_evaluator(const std::filesystem::path& path, const RunConfig& config, const Evaluator& ev);
/// Loads and freezes. Throws EvaluatorChanged if the stored hash disagrees with the weights.
Evaluator load_evaluator(const std::filesystem::path& path, int frame_dims);

}  // namespace ram
