#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "wcgan/model.hpp"
#include "wcgan/training.hpp"

namespace wcgan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Trained state of one class pair.
///
/// File layout (all integers little-endian):
///   "WCGN" | u32 version | u32 class label | u64 global seed
///   | u32 length + UTF-8 text of both ModelSpecs
///   | u32 tensor count
///   | per tensor: u16 name length, name, u8 rank, u64 dims[rank], f64 values
///
/// Tensor names: "gen/<name>" and "disc/<name>" for parameters and batchnorm
/// buffers, "gen.m/", "gen.v/", "disc.m/", "disc.v/" for Adam moments, and
/// "step/t_gen", "step/t_disc" for the step counters.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  int label = 0;
  std::uint64_t global_seed = 0;
  ModelSpec gen_spec;
  ModelSpec disc_spec;
  std::vector<NamedTensor> tensors;
};

/// Same header, specs, tensor names, and bitwise-identical values.
bool bitwise_equal(const Checkpoint& a, const Checkpoint& b);

Checkpoint make_checkpoint(const TrainingState& state, int label, std::uint64_t global_seed);
TrainingState restore_state(const Checkpoint& c, const LoopConfig& config = {});
Network restore_generator(const Checkpoint& c);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

// save writes to a sibling temporary file and renames it into place.
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int label);

}  // namespace wcgan
