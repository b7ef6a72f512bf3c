#include "kanerva/linalg.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "kanerva/errors.hpp"

namespace kanerva {

namespace {

constexpr std::array<double, 3> kJitterLadder{1e-10, 1e-8, 1e-6};

// Returns false on a negative pivot. Pivots within `zero_tol` of zero give a
// zero column when `semidefinite` is set, and fail otherwise.
bool try_cholesky(const Matrix& s, double jitter, bool semidefinite, Matrix& l) {
  const Index n = s.rows();
  l.setZero(n, n);
  double scale = 0.0;
  for (Index i = 0; i < n; ++i) scale = std::max(scale, std::abs(s(i, i)));
  const double zero_tol = 1e-14 * std::max(scale, 1.0) * static_cast<double>(n);
  for (Index j = 0; j < n; ++j) {
    double d = s(j, j) + jitter;
    for (Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!std::isfinite(d)) return false;
    if (d <= zero_tol) {
      if (!semidefinite || d < -zero_tol) return false;
      continue;  // column stays zero
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Index i = j + 1; i < n; ++i) {
      double v = s(i, j);
      for (Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / ljj;
    }
  }
  return true;
}

void require_square_symmetric(const Matrix& s, const char* what) {
  if (s.rows() != s.cols()) throw DimensionMismatch(std::string(what) + ": matrix is not square");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if (!is_symmetric(s, kSymmetryTol * scale)) throw NotPSD(std::string(what) + ": matrix is not symmetric");
}

Matrix factor(const Matrix& s, double jitter, bool semidefinite, const char* what) {
  require_square_symmetric(s, what);
  Matrix l;
  if (try_cholesky(s, jitter, semidefinite, l)) return l;
  for (double rung : kJitterLadder) {
    if (rung <= jitter) continue;
    if (try_cholesky(s, rung, semidefinite, l)) return l;
  }
  throw NotPSD(std::string(what) + ": factorisation failed after jitter 1e-6");
}

}  // namespace

Matrix cholesky(const Matrix& s, double jitter) { return factor(s, jitter, true, "cholesky"); }

Matrix solve_psd(const Matrix& s, const Matrix& b) {
  if (b.rows() != s.rows()) throw DimensionMismatch("solve_psd: right-hand side row count");
  const Matrix l = factor(s, 0.0, false, "solve_psd");
  const auto lower = l.triangularView<Eigen::Lower>();
  Matrix x = lower.solve(b);
  lower.transpose().solveInPlace(x);
  return x;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Vector vec(const Matrix& x) { return Eigen::Map<const Vector>(x.data(), x.size()); }

Matrix unvec(const Vector& v, Index rows, Index cols) {
  if (v.size() != rows * cols) throw DimensionMismatch("unvec: size");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

JointGaussian gaussian_condition(const JointGaussian& joint, std::span<const Index> observed_indices,
                                 const Vector& observed_values) {
  const Index n = joint.mean.size();
  if (joint.cov.rows() != n || joint.cov.cols() != n)
    throw DimensionMismatch("gaussian_condition: covariance shape");
  if (static_cast<Index>(observed_indices.size()) != observed_values.size())
    throw DimensionMismatch("gaussian_condition: observed values length");
  if (observed_indices.empty()) return joint;

  std::vector<bool> is_observed(static_cast<std::size_t>(n), false);
  for (Index i : observed_indices) {
    if (i < 0 || i >= n) throw DimensionMismatch("gaussian_condition: index out of range");
    if (is_observed[static_cast<std::size_t>(i)])
      throw DimensionMismatch("gaussian_condition: duplicate observed index");
    is_observed[static_cast<std::size_t>(i)] = true;
  }
  std::vector<Index> hidden;
  for (Index i = 0; i < n; ++i)
    if (!is_observed[static_cast<std::size_t>(i)]) hidden.push_back(i);
  const std::vector<Index> observed(observed_indices.begin(), observed_indices.end());

  const Index nh = static_cast<Index>(hidden.size());
  const Index no = static_cast<Index>(observed.size());
  Matrix s_oo = joint.cov(observed, observed);
  symmetrize(s_oo);
  const Matrix s_ho = joint.cov(hidden, observed);
  const Vector innovation = observed_values - joint.mean(observed);

  Matrix rhs(no, 1 + nh);
  rhs.col(0) = innovation;
  rhs.rightCols(nh) = s_ho.transpose();
  const Matrix solved = solve_psd(s_oo, rhs);

  JointGaussian post;
  post.mean = joint.mean(hidden) + s_ho * solved.col(0);
  post.cov = joint.cov(hidden, hidden) - s_ho * solved.rightCols(nh);
  symmetrize(post.cov);
  return post;
}

void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

std::string dump_matrix(const Matrix& m) {
  std::string out;
  char buf[40];
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      if (c) out += ' ';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Matrix parse_matrix_dump(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::istringstream lines{std::string(text)};
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::vector<double> row;
    double v;
    while (fields >> v) row.push_back(v);
    if (!fields.eof()) throw IoError("matrix dump: malformed number");
    if (!rows.empty() && row.size() != rows.front().size()) throw IoError("matrix dump: ragged rows");
    rows.push_back(std::move(row));
  }
  const Index nr = static_cast<Index>(rows.size());
  const Index nc = nr ? static_cast<Index>(rows.front().size()) : 0;
  Matrix m(nr, nc);
  for (Index r = 0; r < nr; ++r)
    for (Index c = 0; c < nc; ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

}  // namespace kanerva
