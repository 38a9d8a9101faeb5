#pragma once

#include <filesystem>

#include "maskrank/eval/feature_set.hpp"

namespace maskrank::io {

/// Versioned binary feature file: magic, version, n, d, then per row the
/// identity string, camera string and d little-endian doubles. Round trips
/// bit-exactly; readers reject bad magic and truncation with the offending
/// byte offset.
void write_features(const std::filesystem::path& path,
                    const eval::FeatureSet& set);
eval::FeatureSet read_features(const std::filesystem::path& path);

}  // namespace maskrank::io
