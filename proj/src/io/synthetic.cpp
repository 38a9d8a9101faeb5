#include "maskrank/io/synthetic.hpp"

#include <algorithm>
#include <cstdio>

#include "maskrank/rng.hpp"

namespace maskrank::io {

void SyntheticSpec::validate() const {
  if (identities < 1 || images_per_identity < 1 || center_dim < 1 ||
      height < 1 || width < 1)
    throw ConfigError("SyntheticSpec: all counts must be >= 1");
  if (channels != 1 && channels != 3)
    throw ConfigError("SyntheticSpec: channels must be 1 or 3");
  if (!(sigma >= 0.0)) throw ConfigError("SyntheticSpec: sigma must be >= 0");
}

namespace {

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

SyntheticDataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  // The foreground box: the middle half of each axis, never empty.
  const int y0 = spec.height / 4, y1 = spec.height - spec.height / 4;
  const int x0 = spec.width / 4, x1 = spec.width - spec.width / 4;

  SyntheticDataset out;
  out.images.reserve(static_cast<std::size_t>(spec.identities) *
                     static_cast<std::size_t>(spec.images_per_identity));
  for (int id = 0; id < spec.identities; ++id) {
    std::vector<double> center(static_cast<std::size_t>(spec.center_dim));
    for (double& v : center) v = rng.uniform(0.2, 0.8);
    for (int img = 0; img < spec.images_per_identity; ++img) {
      SyntheticImage item;
      item.identity = id;
      item.camera = img % 2;
      // Background clutter carries a camera signature stronger than the
      // foreground noise, so ignoring the mask invites chasing the camera.
      // The base level is redrawn per image (spatially correlated, so pixel
      // averaging cannot remove it) to deny the encoder any stable
      // background component to lean on.
      const double cam_shift = item.camera == 0 ? -1.0 : 1.0;
      const double bg_base = 0.5 + 2.0 * spec.sigma * rng.uniform(-1.0, 1.0);
      // A milder camera tint on the foreground: cross-camera matching has
      // to shed it, which keeps compactness worth buying beyond the margin.
      const double fg_shift = 0.5 * spec.sigma * cam_shift;
      item.image = Raster(spec.height, spec.width, spec.channels);
      item.mask = Raster(spec.height, spec.width, 1);
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          const bool fg = y >= y0 && y < y1 && x >= x0 && x < x1;
          if (fg) item.mask.at(y, x, 0) = 1.0;
          for (int c = 0; c < spec.channels; ++c) {
            const double noise = spec.sigma * rng.gaussian();
            if (fg) {
              const std::size_t slot =
                  (static_cast<std::size_t>(y * spec.width + x) *
                       static_cast<std::size_t>(spec.channels) +
                   static_cast<std::size_t>(c)) %
                  static_cast<std::size_t>(spec.center_dim);
              item.image.at(y, x, c) = clip01(center[slot] + fg_shift + noise);
            } else {
              item.image.at(y, x, c) =
                  clip01(bg_base + spec.sigma * cam_shift + 2.0 * noise);
            }
          }
        }
      }
      out.images.push_back(std::move(item));
    }
  }
  return out;
}

std::vector<ManifestRecord> write_synthetic_dataset(
    const SyntheticSpec& spec, const std::filesystem::path& dir) {
  if (spec.images_per_identity < 3)
    throw ConfigError(
        "write_synthetic_dataset: need at least 3 images per identity (train "
        "+ query + gallery)");
  const SyntheticDataset data = gen_synthetic(spec);
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");

  std::vector<ManifestRecord> records;
  records.reserve(data.images.size());
  char name[64];
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const SyntheticImage& item = data.images[i];
    const int m = spec.images_per_identity;
    const int img_index = static_cast<int>(i) % m;
    std::snprintf(name, sizeof name, "id%03d_%02d.pnm", item.identity,
                  img_index);
    const std::string image_rel = std::string("images/") + name;
    const std::string mask_rel = std::string("masks/") + name;
    write_pnm(dir / image_rel, item.image);
    write_pnm(dir / mask_rel, item.mask);

    ManifestRecord rec;
    rec.image = image_rel;
    rec.mask = mask_rel;
    std::snprintf(name, sizeof name, "id%03d", item.identity);
    rec.id = name;
    rec.cam = item.camera == 0 ? "c0" : "c1";
    // The query (second-to-last image) retrieves cross-camera. Odd
    // identities swap their second gallery image for one sharing the query
    // camera: the protocol filters it as junk for its own query but keeps
    // it as a same-camera distractor for every other query, which punishes
    // camera-leaning embeddings.
    const int second_gallery =
        m >= 6 && item.identity % 2 == 1 ? m - 4 : (m >= 5 ? m - 3 : -1);
    if (img_index == m - 2)
      rec.split = "query";
    else if (img_index == m - 1 || img_index == second_gallery)
      rec.split = "gallery";
    else
      rec.split = "train";
    records.push_back(std::move(rec));
  }

  write_manifest(dir / "manifest.jsonl", records);
  std::vector<ManifestRecord> nomask = records;
  for (ManifestRecord& rec : nomask) rec.mask.clear();
  write_manifest(dir / "manifest_nomask.jsonl", nomask);
  return records;
}

}  // namespace maskrank::io
