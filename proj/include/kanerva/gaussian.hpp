#pragma once

#include "kanerva/linalg.hpp"
#include "kanerva/rng.hpp"

namespace kanerva {

/// Diagonal Gaussian stored as mean and log-variance.
struct DiagGaussian {
  Vector mean;
  Vector log_variance;

  Index size() const { return mean.size(); }
  Vector variance() const { return log_variance.array().exp(); }

  static DiagGaussian standard(Index n) { return {Vector::Zero(n), Vector::Zero(n)}; }
  /// mean + exp(log_variance / 2) ⊙ eps
  Vector reparameterize(const Vector& eps) const;
  Vector sample(Rng& rng) const;
};

/// KL(q || p) for diagonal Gaussians, in nats.
double kl_diag(const DiagGaussian& q, const DiagGaussian& p);

}  // namespace kanerva
