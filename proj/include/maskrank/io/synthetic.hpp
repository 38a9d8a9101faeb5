#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "maskrank/io/manifest.hpp"
#include "maskrank/io/raster.hpp"

namespace maskrank::io {

// Recipe for a desk-scale corpus. Every identity gets a latent center;
// each of its images renders that center into a foreground box over a
// camera-tinted background, so the mask separates signal from camera bias.
struct SyntheticSpec {
  int identities = 60;
  int images_per_identity = 8;
  int center_dim = 8;
  double sigma = 0.09;
  int height = 12;
  int width = 6;
  int channels = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticImage {
  Raster image;
  Raster mask;
  int identity = 0;
  int camera = 0;  // alternates 0, 1, 0, 1, ... per identity's image index
};

struct SyntheticDataset {
  std::vector<SyntheticImage> images;  // identity-major, image-index order
};

/// Pure in-memory generation, bit-deterministic under spec.seed. Foreground
/// pixels tile the identity's latent center plus gaussian noise sigma;
/// background pixels sit at a per-image base level plus a camera shift of
/// +-sigma plus noise of width 2*sigma, so the clutter outweighs the
/// within-class noise and carries no stable component.
SyntheticDataset gen_synthetic(const SyntheticSpec& spec);

/// Renders the corpus under `dir` (images/ and masks/ as portable pixmaps)
/// and writes manifest.jsonl plus manifest_nomask.jsonl (same records, mask
/// key omitted). Per identity the second-to-last image is the query and the
/// last is gallery; given >= 5 images the third-from-last is also gallery,
/// except that odd identities with >= 6 images use the fourth-from-last
/// instead, which shares the query camera. That image is protocol-filtered
/// junk for its own query but a same-camera distractor for all others. The
/// rest train. Requires images_per_identity >= 3; 8 images leave 5 to
/// train on per identity.
std::vector<ManifestRecord> write_synthetic_dataset(
    const SyntheticSpec& spec, const std::filesystem::path& dir);

}  // namespace maskrank::io
