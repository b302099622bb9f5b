#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "minaf/nn/adam.hpp"
#include "minaf/nn/tape.hpp"

namespace minaf::nn {

/// Binary checkpoint: "MNFW", u32 version, u32 header length + JSON header
/// (hyperparameters, epoch, seed, ...), u32 parameter count, then per
/// parameter: u32 name length, name, u32 rank (2), u32 rows, u32 cols, f32
/// values; then u8 optimizer flag, and if set u64 step count followed by the
/// first and second moments of every parameter in table order (f32).
/// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  nlohmann::json header;
  ParamSet<float> params;
  bool has_optimizer = false;
  std::uint64_t adam_steps = 0;
  std::vector<Mat<float>> adam_m;
  std::vector<Mat<float>> adam_v;
};

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header, const ParamSet<float>& params,
                     const Adam<float>* optimizer);
CheckpointData load_checkpoint(const std::filesystem::path& path);

}  // namespace minaf::nn
