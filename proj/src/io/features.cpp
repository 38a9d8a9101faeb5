#include "maskrank/io/features.hpp"

#include <cstring>

#include "maskrank/io/binary.hpp"

namespace maskrank::io {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'F', 'T'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_features(const std::filesystem::path& path,
                    const eval::FeatureSet& set) {
  ByteWriter out(path);
  out.write(kMagic, 4);
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(set.size()));
  out.u32(static_cast<std::uint32_t>(set.dim()));
  for (Index i = 0; i < set.size(); ++i) {
    out.str(set.identity()[static_cast<std::size_t>(i)]);
    out.str(set.camera()[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < set.dim(); ++j) out.f64(set.features()(i, j));
  }
}

eval::FeatureSet read_features(const std::filesystem::path& path) {
  ByteReader in(path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(in.path() + ": bad magic at byte 0");
  const std::uint32_t version = in.u32();
  if (version != kVersion)
    throw FormatError(in.path() + ": unsupported version " +
                      std::to_string(version) + " at byte 4");
  const std::uint32_t n = in.u32();
  const std::uint32_t d = in.u32();

  Matrix features(n, d);
  std::vector<std::string> identity, camera;
  identity.reserve(n);
  camera.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    identity.push_back(in.str());
    camera.push_back(in.str());
    for (std::uint32_t j = 0; j < d; ++j)
      features(static_cast<Index>(i), static_cast<Index>(j)) = in.f64();
  }
  if (!in.exhausted())
    throw FormatError(in.path() + ": trailing bytes at byte " +
                      std::to_string(in.offset()));
  return eval::FeatureSet(std::move(features), std::move(identity),
                          std::move(camera));
}

}  // namespace maskrank::io
