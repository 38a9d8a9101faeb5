#pragma once

#include <filesystem>
#include <vector>

#include "maskrank/types.hpp"

namespace maskrank::io {

// Dense H x W x C image, row-major with interleaved channels, values in
// [0, 1]. Grayscale is C=1, color C=3; nothing else is supported.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Raster() = default;
  Raster(int height_in, int width_in, int channels_in, double fill = 0.0);

  double& at(int y, int x, int c);
  double at(int y, int x, int c) const;
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }

  /// Flattened copy (length H*W*C) in storage order, for feeding encoders.
  Vector flatten() const;
};

/// Keeps a pixel where the mask reads above 0.5, zeroes it otherwise.
/// The mask must be single-channel with the same spatial shape.
Raster apply_mask(const Raster& image, const Raster& mask);

/// Binary portable pixmap I/O: P5 for single-channel, P6 for three-channel,
/// maxval 255. Values are normalized to [0,1] on read and quantized by
/// rounding on write.
Raster read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Raster& raster);

}  // namespace maskrank::io
