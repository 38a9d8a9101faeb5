#include "maskrank/io/raster.hpp"

#include <cmath>
#include <fstream>
#include <string>

namespace maskrank::io {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace

Raster::Raster(int height_in, int width_in, int channels_in, double fill)
    : height(height_in), width(width_in), channels(channels_in) {
  require(height >= 1 && width >= 1, "Raster: empty shape");
  require(channels == 1 || channels == 3, "Raster: channels must be 1 or 3");
  data.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

double& Raster::at(int y, int x, int c) {
  return data[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
               static_cast<std::size_t>(x)) *
                  static_cast<std::size_t>(channels) +
              static_cast<std::size_t>(c)];
}

double Raster::at(int y, int x, int c) const {
  return const_cast<Raster*>(this)->at(y, x, c);
}

Vector Raster::flatten() const {
  Vector out(static_cast<Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    out[static_cast<Index>(i)] = data[i];
  return out;
}

Raster apply_mask(const Raster& image, const Raster& mask) {
  require(mask.channels == 1, "apply_mask: mask must be single-channel");
  require(mask.height == image.height && mask.width == image.width,
          "apply_mask: spatial shapes differ");
  Raster out = image;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      if (!(mask.at(y, x, 0) > 0.5))
        for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = 0.0;
  return out;
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

int parse_positive(const std::string& tok, const char* what) {
  try {
    const int v = std::stoi(tok);
    if (v >= 1) return v;
  } catch (const std::exception&) {
  }
  throw FormatError(std::string("pnm: bad ") + what + " '" + tok + "'");
}

}  // namespace

Raster read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("pnm: cannot open " + path.string());
  const std::string magic = next_token(in);
  int channels = 0;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    throw FormatError("pnm: unsupported magic '" + magic + "' in " +
                      path.string());
  const int width = parse_positive(next_token(in), "width");
  const int height = parse_positive(next_token(in), "height");
  const int maxval = parse_positive(next_token(in), "maxval");
  if (maxval != 255)
    throw FormatError("pnm: only maxval 255 is supported, got " +
                      std::to_string(maxval));
  // The header ends with exactly one whitespace byte, already consumed by
  // next_token. Raw samples follow.
  Raster out(height, width, channels);
  std::vector<unsigned char> bytes(out.data.size());
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size())
    throw FormatError("pnm: truncated pixel data in " + path.string());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    out.data[i] = static_cast<double>(bytes[i]) / 255.0;
  return out;
}

void write_pnm(const std::filesystem::path& path, const Raster& raster) {
  require(raster.channels == 1 || raster.channels == 3,
          "pnm: channels must be 1 or 3");
  require(!raster.data.empty(), "pnm: empty raster");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("pnm: cannot write " + path.string());
  out << (raster.channels == 1 ? "P5" : "P6") << "\n"
      << raster.width << " " << raster.height << "\n255\n";
  std::vector<unsigned char> bytes(raster.data.size());
  for (std::size_t i = 0; i < raster.data.size(); ++i) {
    const double clipped = std::min(1.0, std::max(0.0, raster.data[i]));
    bytes[i] = static_cast<unsigned char>(std::lround(clipped * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("pnm: write failed for " + path.string());
}

}  // namespace maskrank::io
