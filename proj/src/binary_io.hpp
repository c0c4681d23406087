// SPDX-License-Identifier: Apache-2.0
//
// Little-endian byte buffers and atomic file writes shared by the binary formats.

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "semflow/types.hpp"

namespace semflow::io {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  [[nodiscard]] const std::vector<char>& buffer() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
  }

  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> data, std::filesystem::path path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  double f64() { return std::bit_cast<double>(get(8)); }

  std::string string(std::size_t n) {
    need(n);
    std::string s(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  void expect_magic(std::string_view magic) {
    if (string(magic.size()) != magic) {
      throw IoError(path_.string() + ": bad magic, expected '" + std::string(magic) + "'");
    }
  }

  void expect_end() const {
    if (pos_ != data_.size()) throw IoError(path_.string() + ": trailing bytes after payload");
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw IoError(path_.string() + ": truncated file");
  }

  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::vector<char> data_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);

/// Writes to `path.tmp` and renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::vector<char>& bytes);
void write_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace semflow::io
