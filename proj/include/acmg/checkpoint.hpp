#pragma once

#include <filesystem>
#include <optional>

#include "acmg/model.hpp"
#include "acmg/train.hpp"

namespace acmg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::vector<ad::Parameter> parameters;  // values only; grads empty
  std::optional<OptimizerState> optimizer;
};

/// Writes the model (and optionally the optimizer state) atomically.
void save_checkpoint(const FusionModel& model, const OptimizerState* optimizer,
                     const std::filesystem::path& path);

/// Parses and verifies a checkpoint. Throws FormatError subclasses on
/// bad magic, version, checksum or layout; IoError if unreadable.
Checkpoint read_checkpoint(const std::filesystem::path& path);
Checkpoint parse_checkpoint(const std::string& bytes);

/// Builds a model from a checkpoint, checking names and shapes.
FusionModel restore_model(const Checkpoint& ckpt);

}  // namespace acmg
