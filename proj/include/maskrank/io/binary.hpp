#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "maskrank/types.hpp"

namespace maskrank::io {

// Little-endian binary reader with offset tracking, so format errors can
// point at the byte where the file went wrong regardless of host order.
class ByteReader {
 public:
  explicit ByteReader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw FormatError("cannot open " + path_);
  }

  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError(path_ + ": truncated at byte " +
                        std::to_string(offset_ + static_cast<std::uint64_t>(
                                                     in_.gcount())));
    offset_ += n;
  }

  std::uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }

  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str(std::size_t max_len = 1 << 20) {
    const std::uint32_t len = u32();
    if (len > max_len)
      throw FormatError(path_ + ": implausible string length " +
                        std::to_string(len) + " at byte " +
                        std::to_string(offset_ - 4));
    std::string s(len, '\0');
    if (len > 0) read(s.data(), len);
    return s;
  }

  std::uint64_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

  /// True when no byte remains; does not consume anything.
  bool exhausted() { return in_.peek() == EOF; }

 private:
  std::ifstream in_;
  std::string path_;
  std::uint64_t offset_ = 0;
};

class ByteWriter {
 public:
  explicit ByteWriter(const std::filesystem::path& path)
      : out_(path, std::ios::binary), path_(path.string()) {
    if (!out_) throw FormatError("cannot write " + path_);
  }

  void write(const void* src, std::size_t n) {
    out_.write(static_cast<const char*>(src),
               static_cast<std::streamsize>(n));
    if (!out_) throw FormatError(path_ + ": write failed");
  }

  void u32(std::uint32_t v) {
    const unsigned char b[4] = {
        static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
        static_cast<unsigned char>(v >> 16),
        static_cast<unsigned char>(v >> 24)};
    write(b, 4);
  }

  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }

  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    if (!s.empty()) write(s.data(), s.size());
  }

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace maskrank::io
