#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "dsft/model.hpp"
#include "dsft/optimizer.hpp"

namespace dsft {

inline constexpr std::string_view kCheckpointFormat = "DSFT-CKPT v1";

struct Checkpoint {
  Params<float> params;
  std::optional<AdamState> adam;
  long step = 0;
  std::uint64_t seed = 0;  // all streams derive from (seed, step), so this plus step is the RNG state
  std::string vocab_hash;
  nlohmann::ordered_json train_config = nlohmann::ordered_json::object();
};

/// Writes <stem>.json (manifest) and <stem>.bin (little-endian float32 tensors in manifest order,
/// followed by the Adam moments when present).
void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& ckpt);

/// Accepts the stem or either file path. Throws integrity_error when the blob hash or sizes disagree.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path checkpoint_manifest_path(const std::filesystem::path& path);
std::filesystem::path checkpoint_blob_path(const std::filesystem::path& path);

}  // namespace dsft
