#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>

#include "kanerva/gaussian.hpp"
#include "kanerva/linalg.hpp"

namespace kanerva::memory {

inline constexpr double kDefaultSigma2 = 1.0;

/// Matrix-variate Gaussian memory MN(R, U, I_C): R is the K × C mean and U the
/// K × K covariance between rows. The column covariance is the identity and
/// is never stored.
struct MemoryState {
  Matrix R;
  Matrix U;
  double sigma2 = kDefaultSigma2;

  Index K() const { return R.rows(); }
  Index C() const { return R.cols(); }
};

enum class ReadMode { MeanField, Distributional };

/// Full keeps U dense; Diagonal projects every posterior U onto its diagonal.
enum class CovarianceStructure { Full, Diagonal };

/// U0 = factor · factorᵀ. `u0_factor` must be lower-triangular with a
/// positive diagonal.
MemoryState init_memory(Index K, Index C, const Matrix& R0, const Matrix& u0_factor,
                        double sigma2 = kDefaultSigma2);

/// Throws if U is not symmetric or has an eigenvalue below -1e-8.
void validate(const MemoryState& state);

/// w = A · key, with A the K × S address matrix.
Vector compute_weights(const Vector& key, const Matrix& addresses);
Vector compute_weights(const Vector& y, const std::function<Vector(const Vector&)>& key_fn, const Matrix& addresses);

/// Projects every address row onto the unit sphere. Zero rows are left alone.
void normalize_rows(Matrix& addresses);

/// Prior over the code read at weights w: mean wᵀR, variance σ² (mean-field)
/// or wᵀUw + σ² (distributional), shared across the C dimensions.
DiagGaussian read_prior(const Vector& w, const MemoryState& state, ReadMode mode);

/// Exact Bayesian posterior after observing Z (T × C) at weights W (T × K):
///   Δ = Z − W R,  Σ_c = W U,  Σ_z = W U Wᵀ + σ² I
///   R ← R + Σ_cᵀ Σ_z⁻¹ Δ,  U ← U − Σ_cᵀ Σ_z⁻¹ Σ_c
MemoryState write_batch(const MemoryState& state, const Matrix& W, const Matrix& Z,
                        CovarianceStructure structure = CovarianceStructure::Full);

/// The T = 1 case with the scalar Σ_z inverted directly.
MemoryState write_online(const MemoryState& state, const Vector& w, const Vector& z,
                         CovarianceStructure structure = CovarianceStructure::Full, double extra_variance = 0.0);

/// Writes code distributions instead of samples: μ_Q replaces Z and the
/// per-row variances Σ_Q (length T) are added to the diagonal of Σ_z.
MemoryState write_distributional(const MemoryState& state, const Matrix& W, const Matrix& mu_q, const Vector& sigma_q,
                                 CovarianceStructure structure = CovarianceStructure::Full);

/// M = R + L E with L = cholesky(U) and E standard normal.
Matrix sample_memory(const MemoryState& state, std::uint64_t seed);

// KMEM snapshot: "KMEM", K and C as u32 LE, then R and U row-major as f64 LE.
void save_snapshot(const std::filesystem::path& path, const MemoryState& state);
MemoryState load_snapshot(const std::filesystem::path& path, double sigma2 = kDefaultSigma2);

}  // namespace kanerva::memory
