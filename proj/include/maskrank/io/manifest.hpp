#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "maskrank/types.hpp"

namespace maskrank::io {

// One dataset entry. Paths are stored as written in the manifest; relative
// paths are resolved against the manifest's directory by the loader helpers.
struct ManifestRecord {
  std::string image;
  std::string mask;  // empty means no mask available for this image
  std::string id;
  std::string cam;
  std::string split;  // train | query | gallery

  void validate() const;
};

/// JSON-lines manifest: one object per line with keys image, mask
/// (optional), id, cam, split.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestRecord>& records);

}  // namespace maskrank::io
