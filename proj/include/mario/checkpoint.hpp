#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "json.hpp"
#include "mario/model.hpp"
#include "mario/optim.hpp"
#include "mario/tokenizer.hpp"

namespace mario {

/// Binary layout: 8-byte magic, u32 version, u64 header length, JSON header,
/// u32 tensor count, then per tensor: u32 name length, name, u32 rank,
/// u32 rows, u32 cols, rows*cols little-endian float32 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  Vocab vocab;
  std::int64_t step = 0;
  std::optional<OptState> opt;
  /// Free-form run data (training config, RNG state).
  nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws Io or BadFormat.
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
std::string to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

}  // namespace mario
