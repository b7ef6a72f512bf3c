#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kanerva/rng.hpp"

namespace kanerva::sdm {

/// A length-D vector over {-1, +1}.
class BitPattern {
 public:
  BitPattern() = default;
  explicit BitPattern(std::vector<std::int8_t> bits);

  static BitPattern random(int dim, Rng& rng);

  int size() const { return static_cast<int>(bits_.size()); }
  std::int8_t operator[](int i) const { return bits_[static_cast<std::size_t>(i)]; }
  std::span<const std::int8_t> bits() const { return bits_; }

  BitPattern negated() const;
  /// Flips exactly round(fraction·D) distinct positions.
  BitPattern corrupted(double fraction, Rng& rng) const;

  friend bool operator==(const BitPattern&, const BitPattern&) = default;

 private:
  std::vector<std::int8_t> bits_;
};

int dot(const BitPattern& a, const BitPattern& b);
/// h(a, b) = (D - a·b) / 2.
int hamming(const BitPattern& a, const BitPattern& b);

/// Classical sparse distributed memory: a fixed K × D table of ±1 addresses
/// and a K × D table of integer counters.
class SdmState {
 public:
  SdmState(std::vector<BitPattern> addresses, int tau);

  static SdmState random(int dim, int rows, int tau, Rng& rng);
  /// Restores a state with explicit counters (row-major K × D).
  static SdmState from_parts(std::vector<BitPattern> addresses, int tau, std::vector<std::int32_t> counters);

  int dim() const { return dim_; }
  int rows() const { return static_cast<int>(addresses_.size()); }
  int tau() const { return tau_; }
  const BitPattern& address(int k) const { return addresses_[static_cast<std::size_t>(k)]; }
  std::int32_t counter(int k, int d) const {
    return counters_[static_cast<std::size_t>(k) * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(d)];
  }
  std::span<const std::int32_t> counters() const { return counters_; }

  friend bool operator==(const SdmState&, const SdmState&) = default;

 private:
  friend SdmState write(const SdmState& state, const BitPattern& x);

  int dim_ = 0;
  int tau_ = 0;
  std::vector<BitPattern> addresses_;
  std::vector<std::int32_t> counters_;
};

/// w_k = 1 iff h(x, A_k) <= tau.
std::vector<std::uint8_t> select(const SdmState& state, const BitPattern& x);

/// Adds x to the counters of every selected row. Throws CounterOverflow
/// instead of wrapping.
SdmState write(const SdmState& state, const BitPattern& x);

/// Sign of the summed selected counters; a zero sum reads as -1.
BitPattern read(const SdmState& state, const BitPattern& x);

BitPattern iterative_read(const SdmState& state, const BitPattern& x, int iterations);

/// P[Bin(D, 1/2) <= tau].
double selection_probability(int dim, int tau);

/// Smallest tau whose expected selection fraction reaches `fraction`.
int tau_for_fraction(int dim, double fraction = 0.1);

// SDM1 pattern files: "SDM1", D as u32 LE, then ceil(D/8) bytes per pattern,
// LSB-first, bit set for +1.
void write_patterns(const std::filesystem::path& path, std::span<const BitPattern> patterns);
std::vector<BitPattern> read_patterns(const std::filesystem::path& path);

}  // namespace kanerva::sdm
