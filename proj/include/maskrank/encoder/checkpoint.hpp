#pragma once

#include <filesystem>
#include <utility>

#include "maskrank/encoder/encoder.hpp"

namespace maskrank::encoder {

/// Versioned binary checkpoint: magic, version, the config block, then the
/// raw weights as little-endian doubles, layer by layer in declaration
/// order, row-major within each matrix. Loading restores config and params
/// bit-exactly.
void save_checkpoint(const std::filesystem::path& path,
                     const EncoderConfig& config, const EncoderParams& params);
std::pair<EncoderConfig, EncoderParams> load_checkpoint(
    const std::filesystem::path& path);

}  // namespace maskrank::encoder
