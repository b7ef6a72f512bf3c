#include "kanerva/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "kanerva/errors.hpp"

namespace kanerva::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void Writer::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::f64(double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void Writer::finish() {
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path_.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw IoError("short write to " + path_.string());
}

Reader::Reader(const std::filesystem::path& path) : name_(path.string()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + name_);
  buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void Reader::need(std::size_t n) const {
  if (remaining() < n) throw IoError(name_ + ": unexpected end of file");
}

void Reader::expect_magic(std::string_view tag) {
  need(tag.size());
  if (std::memcmp(buf_.data() + pos_, tag.data(), tag.size()) != 0)
    throw IoError(name_ + ": bad header, expected " + std::string(tag));
  pos_ += tag.size();
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
  pos_ += 4;
  return v;
}

double Reader::f64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
  pos_ += 8;
  return std::bit_cast<double>(v);
}

std::vector<std::uint8_t> Reader::bytes(std::size_t n) {
  need(n);
  std::vector<std::uint8_t> out(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return out;
}

std::string Reader::str(std::size_t n) {
  auto b = bytes(n);
  return {b.begin(), b.end()};
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace kanerva::io
