#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kanerva::io {

/// Buffered little-endian writer; the file is only created by `finish()`.
class Writer {
 public:
  explicit Writer(std::filesystem::path path) : path_(std::move(path)) {}

  void magic(std::string_view tag) { buf_.insert(buf_.end(), tag.begin(), tag.end()); }
  void u32(std::uint32_t v);
  void f64(double v);
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void str(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  void finish();

 private:
  std::filesystem::path path_;
  std::vector<std::uint8_t> buf_;
};

/// Reads the whole file up front and decodes little-endian fields.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);

  void expect_magic(std::string_view tag);
  std::uint32_t u32();
  double f64();
  std::vector<std::uint8_t> bytes(std::size_t n);
  std::string str(std::size_t n);
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::string name_;
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace kanerva::io
