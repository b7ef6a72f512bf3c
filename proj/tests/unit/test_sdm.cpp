#include <doctest.h>

#include <algorithm>

#include <filesystem>
#include <limits>

#include "kanerva/binary_io.hpp"
#include "kanerva/errors.hpp"
#include "kanerva/sdm.hpp"

using namespace kanerva;
using namespace kanerva::sdm;

namespace {

// Exact binomial tail by Pascal's triangle, independent of the lgamma path.
double binomial_tail_half(int n, int k) {
  std::vector<long double> row{1.0L};
  for (int i = 0; i < n; ++i) {
    std::vector<long double> next(row.size() + 1, 0.0L);
    for (std::size_t j = 0; j < row.size(); ++j) {
      next[j] += row[j] / 2;
      next[j + 1] += row[j] / 2;
    }
    row = std::move(next);
  }
  long double s = 0;
  for (int j = 0; j <= k; ++j) s += row[static_cast<std::size_t>(j)];
  return static_cast<double>(s);
}

BitPattern pattern(std::initializer_list<int> v) {
  std::vector<std::int8_t> b;
  for (int x : v) b.push_back(static_cast<std::int8_t>(x));
  return BitPattern(b);
}

}  // namespace

TEST_CASE("hamming examples") {
  Rng rng(1);
  const BitPattern a = BitPattern::random(32, rng);
  CHECK(hamming(a, a) == 0);
  CHECK(hamming(a, a.negated()) == 32);
  CHECK(dot(pattern({1, 1, -1, -1}), pattern({1, -1, -1, 1})) == 0);
  CHECK(hamming(pattern({1, 1, -1, -1}), pattern({1, -1, -1, 1})) == 2);
  CHECK_THROWS_AS(hamming(pattern({1, 1}), pattern({1, 1, 1})), LengthMismatch);
  CHECK_THROWS_AS(pattern({1, 0}), ConfigError);
}

TEST_CASE("hamming is a metric on random triples") {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const int d = std::uniform_int_distribution<int>(1, 80)(rng);
    const BitPattern a = BitPattern::random(d, rng), b = BitPattern::random(d, rng), c = BitPattern::random(d, rng);
    int differing = 0;
    for (int i = 0; i < d; ++i) differing += a[i] != b[i];
    CHECK(hamming(a, b) == differing);
    CHECK(hamming(a, b) == hamming(b, a));
    CHECK((hamming(a, b) == 0) == (a == b));
    CHECK(hamming(a, c) <= hamming(a, b) + hamming(b, c));
  }
}

TEST_CASE("select with the full threshold selects everything") {
  Rng rng(3);
  const SdmState s = SdmState::random(16, 20, 16, rng);
  const auto w = select(s, BitPattern::random(16, rng));
  CHECK(std::count(w.begin(), w.end(), 1) == 20);
}

TEST_CASE("select with zero threshold finds an exact address") {
  Rng rng(4);
  const SdmState s = SdmState::random(64, 50, 0, rng);
  const auto w = select(s, s.address(7));
  CHECK(std::count(w.begin(), w.end(), 1) == 1);
  CHECK(w[7] == 1);
}

TEST_CASE("selection fraction matches the binomial tail") {
  Rng rng(5);
  const int D = 64, K = 100, tau = 24, queries = 1000;
  const SdmState s = SdmState::random(D, K, tau, rng);
  long selected = 0;
  for (int q = 0; q < queries; ++q) {
    const auto w = select(s, BitPattern::random(D, rng));
    selected += std::count(w.begin(), w.end(), 1);
  }
  const double p = binomial_tail_half(D, tau);
  CHECK(selection_probability(D, tau) == doctest::Approx(p).epsilon(1e-10));
  const double frac = static_cast<double>(selected) / (K * queries);
  const double se = std::sqrt(p * (1 - p) / (K * queries));
  CHECK(std::abs(frac - p) < 5 * se);
}

TEST_CASE("tau_for_fraction returns the binomial quantile") {
  const int tau = tau_for_fraction(256, 0.1);
  CHECK(binomial_tail_half(256, tau) >= 0.1);
  CHECK(binomial_tail_half(256, tau - 1) < 0.1);
  CHECK(tau_for_fraction(64, 0.0) == 0);
}

TEST_CASE("write with no selected address leaves the state unchanged") {
  Rng rng(6);
  const SdmState s = SdmState::random(64, 30, 0, rng);
  const BitPattern x = BitPattern::random(64, rng);
  const auto w = select(s, x);
  REQUIRE(std::count(w.begin(), w.end(), 1) == 0);
  CHECK(write(s, x) == s);
}

TEST_CASE("writing x then -x cancels") {
  Rng rng(7);
  const SdmState s0 = SdmState::random(32, 40, 32, rng);  // everything selected
  const SdmState s1 = write(s0, BitPattern::random(32, rng));
  const BitPattern x = BitPattern::random(32, rng);
  CHECK(write(write(s1, x), x.negated()) == s1);
}

TEST_CASE("a single write is recovered exactly") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const SdmState s0 = SdmState::random(128, 200, tau_for_fraction(128, 0.1), rng);
    const BitPattern x = BitPattern::random(128, rng);
    const auto w = select(s0, x);
    if (std::count(w.begin(), w.end(), 1) == 0) continue;
    CHECK(read(write(s0, x), x) == x);
  }
}

TEST_CASE("reading an empty memory gives all -1") {
  Rng rng(9);
  const SdmState s = SdmState::random(16, 10, 16, rng);
  const BitPattern out = read(s, BitPattern::random(16, rng));
  for (int i = 0; i < 16; ++i) CHECK(out[i] == -1);
}

TEST_CASE("the dominant of two overlapping patterns is read back") {
  Rng rng(10);
  const int D = 256;
  SdmState s = SdmState::random(D, 1000, tau_for_fraction(D, 0.1), rng);
  const BitPattern x = BitPattern::random(D, rng);
  const BitPattern y = x.corrupted(0.1, rng);  // close to x, so selections overlap
  const auto wx = select(s, x), wy = select(s, y);
  int overlap = 0;
  for (std::size_t k = 0; k < wx.size(); ++k) overlap += wx[k] && wy[k];
  CHECK(overlap > 0);
  for (int i = 0; i < 3; ++i) s = write(s, x);
  s = write(s, y);
  CHECK(read(s, x) == x);
}

TEST_CASE("writes commute") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const SdmState s = SdmState::random(64, 100, tau_for_fraction(64, 0.2), rng);
    const BitPattern x = BitPattern::random(64, rng), y = BitPattern::random(64, rng);
    CHECK(write(write(s, x), y) == write(write(s, y), x));
  }
}

TEST_CASE("iterative_read base case and fixed points") {
  Rng rng(12);
  SdmState s = SdmState::random(128, 300, tau_for_fraction(128, 0.1), rng);
  const BitPattern x = BitPattern::random(128, rng);
  s = write(s, x);
  const BitPattern q = x.corrupted(0.05, rng);
  CHECK(iterative_read(s, q, 1) == read(s, q));
  if (read(s, x) == x)
    for (int n : {1, 2, 5}) CHECK(iterative_read(s, x, n) == x);
  CHECK_THROWS_AS(iterative_read(s, x, 0), ConfigError);
  const BitPattern out = iterative_read(s, q, 3);
  for (int i = 0; i < out.size(); ++i) CHECK((out[i] == 1 || out[i] == -1));
}

TEST_CASE("the first read moves a corrupted query towards the stored pattern") {
  const int D = 256, K = 1000, trials = 200;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    SdmState s = SdmState::random(D, K, tau_for_fraction(D, 0.1), rng);
    std::vector<BitPattern> stored;
    for (int i = 0; i < 10; ++i) {
      stored.push_back(BitPattern::random(D, rng));
      s = write(s, stored.back());
    }
    double before = 0, after = 0;
    for (int t = 0; t < trials; ++t) {
      const BitPattern& target = stored[static_cast<std::size_t>(t % 10)];
      const BitPattern q = target.corrupted(0.1, rng);
      before += hamming(q, target);
      after += hamming(read(s, q), target);
    }
    CHECK(after < before);
  }
}

TEST_CASE("counter overflow is detected") {
  Rng rng(14);
  const SdmState base = SdmState::random(4, 1, 4, rng);
  std::vector<std::int32_t> counters(4, std::numeric_limits<std::int32_t>::max());
  const SdmState full = SdmState::from_parts({base.address(0)}, 4, counters);
  CHECK_THROWS_AS(write(full, pattern({1, 1, 1, 1})), CounterOverflow);
}

TEST_CASE("SDM1 pattern files round-trip") {
  Rng rng(15);
  std::vector<BitPattern> ps;
  for (int i = 0; i < 5; ++i) ps.push_back(BitPattern::random(13, rng));
  const auto path = std::filesystem::temp_directory_path() / "kanerva_test_patterns.sdm1";
  write_patterns(path, ps);
  CHECK(std::filesystem::file_size(path) == 4 + 4 + 5 * 2);
  CHECK(read_patterns(path) == ps);

  write_patterns(path, std::vector<BitPattern>{pattern({1, -1, -1, -1, -1, -1, -1, -1, 1})});
  io::Reader raw(path);
  raw.expect_magic("SDM1");
  CHECK(raw.u32() == 9);
  CHECK(raw.bytes(2) == std::vector<std::uint8_t>{0x01, 0x01});
  std::filesystem::remove(path);
}
