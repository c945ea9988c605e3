#pragma once

#include <filesystem>

#include "dpcc/core/serialization.hpp"
#include "dpcc/diffusion/training.hpp"

namespace dpcc {

inline constexpr int kCheckpointSchemaVersion = 1;

/// JSON container: {"schema_version", "kind": "dpcc-checkpoint", "shape",
/// "net": {"traj_dim", "embed_dim", "hidden", "activation", "params"},
/// "schedule", "normalizer", "train_config", "validation"}. "params" is the
/// flat parameter vector in DenoiserNet layer order.
Json checkpoint_to_json(const Checkpoint& ckpt);
/// Throws ConfigError on a schema-version mismatch or missing fields.
Checkpoint checkpoint_from_json(const Json& j);

Json train_config_to_json(const TrainConfig& c);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const Json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dpcc
