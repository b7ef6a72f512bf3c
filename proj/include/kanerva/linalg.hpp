#pragma once

#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace kanerva {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Mean and covariance of a multivariate Gaussian.
struct JointGaussian {
  Vector mean;
  Matrix cov;
};

inline constexpr double kSymmetryTol = 1e-9;
inline constexpr double kEigenTol = -1e-8;

/// Lower-triangular L with L Lᵀ = S + jitter·I. If the factorisation fails the
/// jitter is escalated through 1e-10, 1e-8, 1e-6 before throwing NotPSD.
/// Zero pivots of a semidefinite S are kept as exact zero columns.
Matrix cholesky(const Matrix& s, double jitter = 0.0);

/// Solves S X = B for symmetric positive definite S via Cholesky.
Matrix solve_psd(const Matrix& s, const Matrix& b);

Matrix kron(const Matrix& a, const Matrix& b);

/// Column-stacking vectorisation, vec(X) = [x_col0; x_col1; ...].
Vector vec(const Matrix& x);
Matrix unvec(const Vector& v, Index rows, Index cols);

/// Posterior of the unobserved block (ascending index order) given the
/// observed block, via the Schur complement.
JointGaussian gaussian_condition(const JointGaussian& joint, std::span<const Index> observed_indices,
                                 const Vector& observed_values);

void symmetrize(Matrix& m);
bool is_symmetric(const Matrix& m, double tol = kSymmetryTol);
double min_eigenvalue(const Matrix& m);
bool all_finite(const Matrix& m);

/// One row per line, space-separated, 17 significant digits.
std::string dump_matrix(const Matrix& m);
Matrix parse_matrix_dump(std::string_view text);

}  // namespace kanerva
