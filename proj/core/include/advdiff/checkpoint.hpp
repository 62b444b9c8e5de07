#ifndef ADVDIFF_CHECKPOINT_HPP_
#define ADVDIFF_CHECKPOINT_HPP_

#include <filesystem>

#include <nlohmann/json.hpp>

#include "advdiff/nets.hpp"

namespace advdiff::nets {

inline constexpr int kCheckpointFormatVersion = 1;

// On-disk layout: one line of JSON (layer_sizes, activation, seed,
// format_version, parameter_count, extra) terminated by '\n', followed by
// parameter_count 64-bit little-endian IEEE doubles in flatten() order.
struct MlpCheckpoint {
  Mlp net;
  nlohmann::json extra;
};

void save_checkpoint(const std::filesystem::path& path, const Mlp& net,
                     const nlohmann::json& extra = nlohmann::json::object());
MlpCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace advdiff::nets

#endif  // ADVDIFF_CHECKPOINT_HPP_
