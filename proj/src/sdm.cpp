#include "kanerva/sdm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "kanerva/binary_io.hpp"
#include "kanerva/errors.hpp"

namespace kanerva::sdm {

namespace {

void require_same_length(const BitPattern& a, int dim, const char* what) {
  if (a.size() != dim) throw LengthMismatch(std::string(what) + ": pattern length does not match D");
}

}  // namespace

BitPattern::BitPattern(std::vector<std::int8_t> bits) : bits_(std::move(bits)) {
  for (auto b : bits_)
    if (b != 1 && b != -1) throw ConfigError("BitPattern entries must be -1 or +1");
}

BitPattern BitPattern::random(int dim, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  std::vector<std::int8_t> bits(static_cast<std::size_t>(dim));
  for (auto& b : bits) b = coin(rng) ? 1 : -1;
  return BitPattern(std::move(bits));
}

BitPattern BitPattern::negated() const {
  std::vector<std::int8_t> bits(bits_);
  for (auto& b : bits) b = static_cast<std::int8_t>(-b);
  return BitPattern(std::move(bits));
}

BitPattern BitPattern::corrupted(double fraction, Rng& rng) const {
  const int flips = static_cast<int>(std::lround(fraction * size()));
  std::vector<int> order(bits_.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::int8_t> bits(bits_);
  // Partial Fisher-Yates: the first `flips` entries are a uniform subset.
  for (int i = 0; i < flips; ++i) {
    std::uniform_int_distribution<int> pick(i, size() - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
    auto& b = bits[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    b = static_cast<std::int8_t>(-b);
  }
  return BitPattern(std::move(bits));
}

int dot(const BitPattern& a, const BitPattern& b) {
  if (a.size() != b.size()) throw LengthMismatch("dot: pattern lengths differ");
  int s = 0;
  for (int i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

int hamming(const BitPattern& a, const BitPattern& b) { return (a.size() - dot(a, b)) / 2; }

SdmState::SdmState(std::vector<BitPattern> addresses, int tau) : tau_(tau), addresses_(std::move(addresses)) {
  if (addresses_.empty()) throw ConfigError("SDM needs at least one address");
  dim_ = addresses_.front().size();
  for (const auto& a : addresses_) require_same_length(a, dim_, "SdmState");
  if (tau_ < 0 || tau_ > dim_) throw ConfigError("SDM threshold must lie in [0, D]");
  counters_.assign(addresses_.size() * static_cast<std::size_t>(dim_), 0);
}

SdmState SdmState::random(int dim, int rows, int tau, Rng& rng) {
  std::vector<BitPattern> addresses;
  addresses.reserve(static_cast<std::size_t>(rows));
  for (int k = 0; k < rows; ++k) addresses.push_back(BitPattern::random(dim, rng));
  return SdmState(std::move(addresses), tau);
}

SdmState SdmState::from_parts(std::vector<BitPattern> addresses, int tau, std::vector<std::int32_t> counters) {
  SdmState s(std::move(addresses), tau);
  if (counters.size() != s.counters_.size()) throw LengthMismatch("SdmState: counter table must be K x D");
  s.counters_ = std::move(counters);
  return s;
}

std::vector<std::uint8_t> select(const SdmState& state, const BitPattern& x) {
  require_same_length(x, state.dim(), "select");
  std::vector<std::uint8_t> w(static_cast<std::size_t>(state.rows()));
  for (int k = 0; k < state.rows(); ++k) w[static_cast<std::size_t>(k)] = hamming(x, state.address(k)) <= state.tau();
  return w;
}

SdmState write(const SdmState& state, const BitPattern& x) {
  const auto w = select(state, x);
  SdmState next = state;
  const auto dim = static_cast<std::size_t>(state.dim());
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (!w[k]) continue;
    std::int32_t* row = next.counters_.data() + k * dim;
    for (std::size_t d = 0; d < dim; ++d)
      if (__builtin_add_overflow(row[d], static_cast<std::int32_t>(x[static_cast<int>(d)]), &row[d]))
        throw CounterOverflow("SDM counter overflow");
  }
  return next;
}

BitPattern read(const SdmState& state, const BitPattern& x) {
  const auto w = select(state, x);
  std::vector<std::int64_t> sum(static_cast<std::size_t>(state.dim()), 0);
  for (int k = 0; k < state.rows(); ++k) {
    if (!w[static_cast<std::size_t>(k)]) continue;
    for (int d = 0; d < state.dim(); ++d) sum[static_cast<std::size_t>(d)] += state.counter(k, d);
  }
  std::vector<std::int8_t> bits(sum.size());
  std::transform(sum.begin(), sum.end(), bits.begin(), [](std::int64_t s) -> std::int8_t { return s > 0 ? 1 : -1; });
  return BitPattern(std::move(bits));
}

BitPattern iterative_read(const SdmState& state, const BitPattern& x, int iterations) {
  if (iterations < 1) throw ConfigError("iterative_read needs at least one iteration");
  BitPattern current = x;
  for (int i = 0; i < iterations; ++i) current = read(state, current);
  return current;
}

double selection_probability(int dim, int tau) {
  if (tau < 0) return 0.0;
  if (tau >= dim) return 1.0;
  // Sum of C(D, i) / 2^D in log space.
  double total = 0.0;
  for (int i = 0; i <= tau; ++i)
    total += std::exp(std::lgamma(dim + 1.0) - std::lgamma(i + 1.0) - std::lgamma(dim - i + 1.0) - dim * std::log(2.0));
  return std::min(total, 1.0);
}

int tau_for_fraction(int dim, double fraction) {
  for (int tau = 0; tau <= dim; ++tau)
    if (selection_probability(dim, tau) >= fraction) return tau;
  return dim;
}

void write_patterns(const std::filesystem::path& path, std::span<const BitPattern> patterns) {
  if (patterns.empty()) throw IoError("SDM1: no patterns to write");
  const int dim = patterns.front().size();
  io::Writer out(path);
  out.magic("SDM1");
  out.u32(static_cast<std::uint32_t>(dim));
  std::vector<std::uint8_t> packed(static_cast<std::size_t>((dim + 7) / 8));
  for (const auto& p : patterns) {
    require_same_length(p, dim, "write_patterns");
    std::fill(packed.begin(), packed.end(), 0);
    for (int d = 0; d < dim; ++d)
      if (p[d] > 0) packed[static_cast<std::size_t>(d / 8)] |= static_cast<std::uint8_t>(1u << (d % 8));
    out.bytes(packed);
  }
  out.finish();
}

std::vector<BitPattern> read_patterns(const std::filesystem::path& path) {
  io::Reader in(path);
  in.expect_magic("SDM1");
  const int dim = static_cast<int>(in.u32());
  if (dim <= 0) throw IoError("SDM1: dimension must be positive");
  const std::size_t stride = static_cast<std::size_t>((dim + 7) / 8);
  if (in.remaining() % stride != 0) throw IoError("SDM1: truncated pattern");
  std::vector<BitPattern> patterns;
  while (in.remaining() > 0) {
    const auto packed = in.bytes(stride);
    std::vector<std::int8_t> bits(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) bits[static_cast<std::size_t>(d)] = (packed[static_cast<std::size_t>(d / 8)] >> (d % 8)) & 1u ? 1 : -1;
    patterns.emplace_back(std::move(bits));
  }
  return patterns;
}

}  // namespace kanerva::sdm
