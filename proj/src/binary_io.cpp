// SPDX-License-Identifier: Apache-2.0

#include "binary_io.hpp"

#include <fstream>
#include <iterator>
#include <system_error>

namespace semflow::io {

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_atomic(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": rename failed: " + ec.message());
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  write_atomic(path, std::vector<char>(text.begin(), text.end()));
}

}  // namespace semflow::io
