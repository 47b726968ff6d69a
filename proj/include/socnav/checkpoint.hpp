#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "socnav/network.hpp"

namespace socnav {

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epoch = 0;
  double loss = 0.0;
};

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  CheckpointMeta meta;
};

inline constexpr int kCheckpointVersion = 1;

/// File layout: a magic line "SOCNAV-CHECKPOINT <version>", one line of JSON
/// (config, metadata, tensor inventory with byte offsets), then the tensors as
/// little-endian float64 in inventory order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const GridSpec& spec);
GridSpec grid_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown modality/scale names throw ValidationError.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace socnav
