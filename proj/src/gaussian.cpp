#include "kanerva/gaussian.hpp"

#include "kanerva/errors.hpp"

namespace kanerva {

Vector DiagGaussian::reparameterize(const Vector& eps) const {
  if (eps.size() != mean.size()) throw DimensionMismatch("reparameterize: noise length");
  return mean.array() + (0.5 * log_variance.array()).exp() * eps.array();
}

Vector DiagGaussian::sample(Rng& rng) const { return reparameterize(standard_normal(mean.size(), 1, rng)); }

double kl_diag(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.mean.size() != p.mean.size() || q.log_variance.size() != q.mean.size() ||
      p.log_variance.size() != p.mean.size())
    throw DimensionMismatch("kl_diag: lengths differ");
  const auto vq = q.log_variance.array().exp();
  const auto vp = p.log_variance.array().exp();
  const auto d = q.mean.array() - p.mean.array();
  return 0.5 * ((vq + d.square()) / vp - 1.0 + p.log_variance.array() - q.log_variance.array()).sum();
}

}  // namespace kanerva
