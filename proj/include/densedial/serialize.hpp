#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "densedial/common.hpp"

namespace densedial {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swaps");

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void f32_array(const float* data, std::size_t n) { raw(data, n * sizeof(float)); }
  void u64_array(const std::uint64_t* data, std::size_t n) { raw(data, n * sizeof(std::uint64_t)); }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  void magic(const char tag[4]) { raw(tag, 4); }

 private:
  void raw(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed");
  }
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, sizeof v); return v; }
  float f32() { float v; raw(&v, sizeof v); return v; }
  void f32_array(float* data, std::size_t n) { raw(data, n * sizeof(float)); }
  void u64_array(std::uint64_t* data, std::size_t n) { raw(data, n * sizeof(std::uint64_t)); }

  std::string str(std::size_t max_len = 1u << 20) {
    const std::uint32_t n = u32();
    if (n > max_len) throw ShapeError("string length " + std::to_string(n) + " exceeds limit");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

  void expect_magic(const char tag[4], const std::string& what) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, tag, 4) != 0)
      throw DataError("not a " + what + " file (bad magic)");
  }

  bool at_eof() {
    in_.peek();
    return in_.eof();
  }

 private:
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      throw TruncatedError("unexpected end of file");
  }
  std::istream& in_;
};

// Writes to <path>.tmp and renames into place on commit, so a crash or error
// mid-write never leaves a partial file at the destination.
class AtomicFile {
 public:
  explicit AtomicFile(const std::filesystem::path& path)
      : path_(path), tmp_(path.string() + ".tmp") {
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open for writing: " + tmp_.string());
  }

  ~AtomicFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(tmp_, ec);
    }
  }

  std::ostream& stream() { return out_; }

  void commit() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + tmp_.string());
    out_.close();
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec) throw IoError("cannot rename " + tmp_.string() + " -> " + path_.string() + ": " + ec.message());
    committed_ = true;
  }

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

}  // namespace densedial
