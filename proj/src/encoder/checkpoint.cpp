#include "maskrank/encoder/checkpoint.hpp"

#include <cstring>

#include "maskrank/io/binary.hpp"

namespace maskrank::encoder {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const EncoderConfig& config,
                     const EncoderParams& params) {
  config.validate();
  io::ByteWriter out(path);
  out.write(kMagic, 4);
  out.u32(kVersion);
  out.i32(config.height);
  out.i32(config.width);
  out.i32(config.channels);
  out.i32(config.stream_width);
  for (int w : config.level_widths) out.i32(w);
  out.i32(config.pool_window);
  out.i32(config.output_dim);
  out.u64(config.seed);
  for_each_param(params, [&](const char*, const Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) out.f64(m(i, j));
  });
}

std::pair<EncoderConfig, EncoderParams> load_checkpoint(
    const std::filesystem::path& path) {
  io::ByteReader in(path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(in.path() + ": bad magic at byte 0");
  const std::uint32_t version = in.u32();
  if (version != kVersion)
    throw FormatError(in.path() + ": unsupported version " +
                      std::to_string(version) + " at byte 4");
  EncoderConfig config;
  config.height = in.i32();
  config.width = in.i32();
  config.channels = in.i32();
  config.stream_width = in.i32();
  for (int& w : config.level_widths) w = in.i32();
  config.pool_window = in.i32();
  config.output_dim = in.i32();
  config.seed = in.u64();
  config.validate();

  // Rebuild shapes from the config, then fill weights in declaration order.
  Rng rng(0);
  EncoderParams params = init_params(config, rng);
  for_each_param(params, [&](const char*, Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = in.f64();
  });
  if (!in.exhausted())
    throw FormatError(in.path() + ": trailing bytes at byte " +
                      std::to_string(in.offset()));
  return {config, params};
}

}  // namespace maskrank::encoder
