#include "maskrank/io/manifest.hpp"

#include <fstream>

#include "json.hpp"

namespace maskrank::io {

void ManifestRecord::validate() const {
  if (image.empty()) throw FormatError("manifest: empty image path");
  if (id.empty()) throw FormatError("manifest: empty identity label");
  if (cam.empty()) throw FormatError("manifest: empty camera label");
  if (split != "train" && split != "query" && split != "gallery")
    throw FormatError("manifest: split must be train, query or gallery, got '" +
                      split + "'");
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("manifest: cannot open " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest: line " + std::to_string(lineno) + " of " +
                        path.string() + ": " + e.what());
    }
    ManifestRecord rec;
    try {
      rec.image = j.at("image").get<std::string>();
      rec.id = j.at("id").get<std::string>();
      rec.cam = j.at("cam").get<std::string>();
      rec.split = j.at("split").get<std::string>();
      if (j.contains("mask")) rec.mask = j.at("mask").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest: line " + std::to_string(lineno) + " of " +
                        path.string() + ": " + e.what());
    }
    rec.validate();
    out.push_back(std::move(rec));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw FormatError("manifest: cannot write " + path.string());
  for (const ManifestRecord& rec : records) {
    rec.validate();
    nlohmann::json j{{"image", rec.image},
                     {"id", rec.id},
                     {"cam", rec.cam},
                     {"split", rec.split}};
    if (!rec.mask.empty()) j["mask"] = rec.mask;
    out << j.dump() << "\n";
  }
  if (!out) throw FormatError("manifest: write failed for " + path.string());
}

}  // namespace maskrank::io
