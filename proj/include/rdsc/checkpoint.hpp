#pragma once

// Binary checkpoints. Layout (little-endian):
//   "RDSC" | u32 version | u64 meta length | meta JSON |
//   u32 tensor count | per tensor: u16 name length, name, u8 rank,
//   u64 dims[rank], f32 payload[numel]
// Adam moments are stored as tensors named "adam.m.<param>" / "adam.v.<param>".

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "rdsc/training.hpp"

namespace rdsc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  using Error::Error;
};

struct Checkpoint {
  ModelParams params;
  std::optional<AdamState> adam;
  nlohmann::json config;  // RunConfig echo
  std::size_t epoch = 0;
  std::uint64_t seed = 0;  // epoch e draws from derive_seed(seed, e + 1)
  std::vector<EpochLog> log;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck);
// Throws CheckpointError on a bad magic, version, or truncated payload.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Loads and checks every tensor against `cfg` (ShapeError naming the tensor).
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg);

Checkpoint checkpoint_from_state(const TrainState& state, const nlohmann::json& config, std::uint64_t seed);
TrainState state_from_checkpoint(const Checkpoint& ck);

nlohmann::json to_json(const EpochLog& e);
EpochLog epoch_log_from_json(const nlohmann::json& j);

}  // namespace rdsc
