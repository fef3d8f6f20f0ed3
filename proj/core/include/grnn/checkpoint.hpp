#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "grnn/layers.hpp"

namespace grnn {

/// JSON with one entry per tensor (name, shape, values) and the config hash.
/// Values are written in shortest round-trip form, so a reload is bit-exact.
std::string checkpoint_json(const ModelParams& params, std::uint64_t config_hash);
ModelParams parse_checkpoint(std::string_view text, std::uint64_t* config_hash = nullptr);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     std::uint64_t config_hash);
ModelParams load_checkpoint(const std::filesystem::path& path,
                            std::uint64_t* config_hash = nullptr);

}  // namespace grnn
