#include "kanerva/rng.hpp"

namespace kanerva {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t substream_seed(std::uint64_t seed, std::string_view name) {
  return splitmix64(splitmix64(seed) ^ fnv1a(name));
}

std::uint64_t substream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return splitmix64(substream_seed(seed, name) ^ splitmix64(index + 1));
}

Rng make_rng(std::uint64_t seed, std::string_view name) { return Rng(substream_seed(seed, name)); }

Rng make_rng(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return Rng(substream_seed(seed, name, index));
}

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  // Fill row-major so the draw order matches the interchange layout.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = normal(rng);
  return out;
}

}  // namespace kanerva
