#pragma once

#include <cmath>
#include <random>

#include "kanerva/linalg.hpp"
#include "kanerva/rng.hpp"

namespace kanerva::testing {

inline Matrix random_matrix(Index rows, Index cols, Rng& rng) { return standard_normal(rows, cols, rng); }

/// B Bᵀ + ridge·I for a random square B.
inline Matrix random_psd(Index n, Rng& rng, double ridge = 1e-3) {
  const Matrix b = random_matrix(n, n, rng);
  return b * b.transpose() + ridge * Matrix::Identity(n, n);
}

inline Index uniform_index(Index lo, Index hi, Rng& rng) { return std::uniform_int_distribution<Index>(lo, hi)(rng); }

inline double max_abs(const Matrix& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

inline double rel_frobenius(const Matrix& a, const Matrix& b) {
  const double denom = std::max(b.norm(), 1e-300);
  return (a - b).norm() / denom;
}

}  // namespace kanerva::testing
