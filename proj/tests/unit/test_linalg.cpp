#include <doctest.h>

#include <algorithm>

#include <cmath>
#include <vector>

#include "kanerva/errors.hpp"
#include "kanerva/linalg.hpp"
#include "support.hpp"

using namespace kanerva;
using namespace kanerva::testing;

TEST_CASE("cholesky of the identity is the identity") {
  CHECK(max_abs(cholesky(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)) == 0.0);
}

TEST_CASE("cholesky of a hand-checkable 2x2") {
  Matrix s(2, 2);
  s << 4, 2, 2, 3;
  Matrix expected(2, 2);
  expected << 2, 0, 1, std::sqrt(2.0);
  CHECK(max_abs(cholesky(s) - expected) < 1e-15);
}

TEST_CASE("cholesky reconstructs random PSD matrices") {
  Rng rng(11);
  {
    const Matrix s = random_psd(8, rng);
    const Matrix l = cholesky(s);
    CHECK(rel_frobenius(l * l.transpose(), s) < 1e-10);
    CHECK(max_abs(l.triangularView<Eigen::StrictlyUpper>().toDenseMatrix()) == 0.0);
  }
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = uniform_index(1, 16, rng);
    const Matrix s = random_psd(n, rng);
    const Matrix l = cholesky(s);
    CHECK(rel_frobenius(l * l.transpose(), s) < 1e-8);
  }
}

TEST_CASE("cholesky keeps zero pivots of semidefinite matrices") {
  CHECK(max_abs(cholesky(Matrix::Zero(3, 3))) == 0.0);
  Rng rng(3);
  const Matrix b = random_matrix(5, 2, rng);
  const Matrix s = b * b.transpose();  // rank 2
  const Matrix l = cholesky(s);
  CHECK(rel_frobenius(l * l.transpose(), s) < 1e-8);
}

TEST_CASE("cholesky adds the requested jitter") {
  const Matrix l = cholesky(Matrix::Identity(2, 2), 3.0);
  CHECK(max_abs(l * l.transpose() - 4.0 * Matrix::Identity(2, 2)) < 1e-14);
}

TEST_CASE("cholesky rejects indefinite and asymmetric input") {
  Matrix s(2, 2);
  s << 1, 0, 0, -1;
  CHECK_THROWS_AS(cholesky(s), NotPSD);
  Matrix a(2, 2);
  a << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(cholesky(a), NotPSD);
  CHECK_THROWS_AS(cholesky(Matrix::Zero(2, 3)), DimensionMismatch);
}

TEST_CASE("solve_psd examples") {
  Rng rng(5);
  const Matrix b = random_matrix(4, 3, rng);
  CHECK(max_abs(solve_psd(Matrix::Identity(4, 4), b) - b) < 1e-15);
  CHECK(max_abs(solve_psd(2.0 * Matrix::Identity(3, 3), Matrix::Identity(3, 3)) - 0.5 * Matrix::Identity(3, 3)) <
        1e-15);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix s = random_psd(6, rng);
    const Matrix rhs = random_matrix(6, 4, rng);
    const Matrix x = solve_psd(s, rhs);
    CHECK((s * x - rhs).norm() / rhs.norm() < 1e-8);
  }
}

TEST_CASE("solve_psd escalates jitter for a singular system") {
  // Rank-deficient but PSD: solvable only after jitter.
  Matrix s = Matrix::Zero(2, 2);
  s(0, 0) = 1.0;
  const Matrix x = solve_psd(s, Matrix::Identity(2, 2));
  CHECK(std::abs(x(0, 0) - 1.0) < 1e-6);
  CHECK(x.allFinite());
  CHECK_THROWS_AS(solve_psd(Matrix::Identity(2, 2), Matrix::Identity(3, 1)), DimensionMismatch);
}

TEST_CASE("kron examples") {
  CHECK(max_abs(kron(Matrix::Identity(2, 2), Matrix::Identity(2, 2)) - Matrix::Identity(4, 4)) == 0.0);
  Rng rng(7);
  const Matrix b = random_matrix(3, 2, rng);
  CHECK(max_abs(kron(Matrix::Constant(1, 1, 2.0), b) - 2.0 * b) == 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix pa = random_matrix(2, 2, rng);
    const Matrix pb = random_matrix(3, 3, rng);
    const Matrix x = random_matrix(3, 2, rng);
    CHECK(max_abs(kron(pa, pb) * vec(x) - vec(pb * x * pa.transpose())) < 1e-12);
  }
  CHECK(kron(Matrix::Ones(2, 3), Matrix::Ones(4, 5)).rows() == 8);
  CHECK(kron(Matrix::Ones(2, 3), Matrix::Ones(4, 5)).cols() == 15);
}

TEST_CASE("gaussian_condition with nothing observed returns the joint") {
  Rng rng(9);
  JointGaussian j{random_matrix(3, 1, rng), random_psd(3, rng)};
  const JointGaussian post = gaussian_condition(j, {}, Vector());
  CHECK(max_abs(post.mean - j.mean) == 0.0);
  CHECK(max_abs(post.cov - j.cov) == 0.0);
}

TEST_CASE("gaussian_condition on an independent coordinate changes nothing") {
  JointGaussian j{Vector::Zero(2), Matrix::Identity(2, 2)};
  const std::vector<Index> obs{0};
  const JointGaussian post = gaussian_condition(j, obs, Vector::Constant(1, 5.0));
  CHECK(post.mean.size() == 1);
  CHECK(post.mean(0) == 0.0);
  CHECK(post.cov(0, 0) == 1.0);
}

TEST_CASE("gaussian_condition reproduces the scalar Kalman update") {
  // m ~ N(r, u), z | m ~ N(w m, s2); hand-computed posterior.
  const double r = 2.0, u = 3.0, w = 0.5, s2 = 1.0, z = 3.0;
  JointGaussian j;
  j.mean = Vector(2);
  j.mean << r, w * r;
  j.cov = Matrix(2, 2);
  j.cov << u, w * u, w * u, w * w * u + s2;
  const std::vector<Index> obs{1};
  const JointGaussian post = gaussian_condition(j, obs, Vector::Constant(1, z));
  CHECK(post.mean(0) == doctest::Approx(r + u * w * (z - w * r) / (w * w * u + s2)).epsilon(1e-14));
  CHECK(post.mean(0) == doctest::Approx(3.7142857142857144).epsilon(1e-14));
  CHECK(post.cov(0, 0) == doctest::Approx(1.7142857142857144).epsilon(1e-14));
}

TEST_CASE("gaussian_condition matches the explicit-inverse formula") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = uniform_index(2, 8, rng);
    JointGaussian j{random_matrix(n, 1, rng), random_psd(n, rng, 0.1)};
    std::vector<Index> all(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    std::shuffle(all.begin(), all.end(), rng);
    const Index no = uniform_index(1, n - 1, rng);
    std::vector<Index> obs(all.begin(), all.begin() + no);
    std::vector<Index> hidden(all.begin() + no, all.end());
    std::sort(hidden.begin(), hidden.end());
    const Vector v = random_matrix(no, 1, rng);

    const JointGaussian post = gaussian_condition(j, obs, v);
    const Matrix inv = j.cov(obs, obs).inverse();
    const Vector mean = j.mean(hidden) + j.cov(hidden, obs) * inv * (v - j.mean(obs));
    const Matrix cov = j.cov(hidden, hidden) - j.cov(hidden, obs) * inv * j.cov(obs, hidden);
    CHECK(max_abs(post.mean - mean) < 1e-8);
    CHECK(max_abs(post.cov - cov) < 1e-8);
    CHECK(is_symmetric(post.cov));
    CHECK(min_eigenvalue(post.cov) >= kEigenTol);
  }
}

TEST_CASE("conditioning again on an already-fixed value is idempotent") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = uniform_index(3, 6, rng);
    JointGaussian j{random_matrix(n, 1, rng), random_psd(n, rng, 0.1)};
    const std::vector<Index> obs{0};
    const Vector v = random_matrix(1, 1, rng);
    const JointGaussian once = gaussian_condition(j, obs, v);

    // Re-embed the observed coordinate as a point mass and condition on it.
    JointGaussian embedded{Vector(n), Matrix::Zero(n, n)};
    embedded.mean << v(0), once.mean;
    embedded.cov.bottomRightCorner(n - 1, n - 1) = once.cov;
    const JointGaussian twice = gaussian_condition(embedded, obs, v);
    CHECK(max_abs(twice.mean - once.mean) < 1e-8);
    CHECK(max_abs(twice.cov - once.cov) < 1e-8);
  }
}

TEST_CASE("gaussian_condition validates its indices") {
  JointGaussian j{Vector::Zero(3), Matrix::Identity(3, 3)};
  const std::vector<Index> dup{1, 1};
  CHECK_THROWS_AS(gaussian_condition(j, dup, Vector::Zero(2)), DimensionMismatch);
  const std::vector<Index> out_of_range{3};
  CHECK_THROWS_AS(gaussian_condition(j, out_of_range, Vector::Zero(1)), DimensionMismatch);
}

TEST_CASE("matrix dumps round-trip exactly") {
  Rng rng(19);
  const Matrix m = random_matrix(4, 3, rng) * 1e3;
  const std::string text = dump_matrix(m);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  CHECK(max_abs(parse_matrix_dump(text) - m) == 0.0);
  CHECK_THROWS_AS(parse_matrix_dump("1 2\n3\n"), IoError);
}
