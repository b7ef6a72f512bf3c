#include "kanerva/memory.hpp"

#include <cmath>

#include "kanerva/binary_io.hpp"
#include "kanerva/errors.hpp"

namespace kanerva::memory {

namespace {

void require_state(const MemoryState& s) {
  if (s.U.rows() != s.K() || s.U.cols() != s.K()) throw DimensionMismatch("memory: U must be K x K");
  if (!(s.sigma2 > 0.0)) throw ConfigError("memory: sigma2 must be positive");
}

void finish_covariance(Matrix& u, CovarianceStructure structure) {
  if (structure == CovarianceStructure::Diagonal) {
    u = Matrix(u.diagonal().asDiagonal());
  } else {
    symmetrize(u);
  }
}

MemoryState apply_batch(const MemoryState& state, const Matrix& W, const Matrix& Z, const Vector& extra,
                        CovarianceStructure structure) {
  require_state(state);
  if (W.cols() != state.K()) throw DimensionMismatch("write: W must have K columns");
  if (Z.cols() != state.C()) throw DimensionMismatch("write: Z must have C columns");
  if (W.rows() != Z.rows()) throw DimensionMismatch("write: W and Z must have T rows");
  if (!W.allFinite() || !Z.allFinite()) throw NonFinite("write: non-finite weights or codes");
  const Index t = W.rows();
  if (t == 0) return state;

  const Matrix delta = Z - W * state.R;
  const Matrix sigma_c = W * state.U;
  Matrix sigma_z = sigma_c * W.transpose();
  sigma_z.diagonal().array() += state.sigma2;
  sigma_z.diagonal() += extra;
  symmetrize(sigma_z);

  Matrix rhs(t, state.C() + state.K());
  rhs << delta, sigma_c;
  const Matrix solved = solve_psd(sigma_z, rhs);

  MemoryState next = state;
  next.R += sigma_c.transpose() * solved.leftCols(state.C());
  next.U -= sigma_c.transpose() * solved.rightCols(state.K());
  finish_covariance(next.U, structure);
  return next;
}

}  // namespace

MemoryState init_memory(Index K, Index C, const Matrix& R0, const Matrix& u0_factor, double sigma2) {
  if (R0.rows() != K || R0.cols() != C) throw DimensionMismatch("init_memory: R0 must be K x C");
  if (u0_factor.rows() != K || u0_factor.cols() != K) throw DimensionMismatch("init_memory: U0 factor must be K x K");
  for (Index i = 0; i < K; ++i) {
    if (!(u0_factor(i, i) > 0.0)) throw ConfigError("init_memory: U0 factor diagonal must be positive");
    for (Index j = i + 1; j < K; ++j)
      if (u0_factor(i, j) != 0.0) throw ConfigError("init_memory: U0 factor must be lower-triangular");
  }
  MemoryState s{R0, u0_factor * u0_factor.transpose(), sigma2};
  symmetrize(s.U);
  require_state(s);
  return s;
}

void validate(const MemoryState& state) {
  require_state(state);
  if (!state.R.allFinite() || !state.U.allFinite()) throw NonFinite("memory: non-finite parameters");
  if (!is_symmetric(state.U)) throw NotPSD("memory: U is not symmetric");
  if (min_eigenvalue(state.U) < kEigenTol) throw NotPSD("memory: U has a negative eigenvalue");
}

Vector compute_weights(const Vector& key, const Matrix& addresses) {
  if (key.size() != addresses.cols()) throw DimensionMismatch("compute_weights: key length must equal S");
  if (!key.allFinite()) throw NonFinite("compute_weights: non-finite key");
  return addresses * key;
}

Vector compute_weights(const Vector& y, const std::function<Vector(const Vector&)>& key_fn, const Matrix& addresses) {
  if (!y.allFinite()) throw NonFinite("compute_weights: non-finite y");
  return compute_weights(key_fn(y), addresses);
}

void normalize_rows(Matrix& addresses) {
  for (Index k = 0; k < addresses.rows(); ++k) {
    const double n = addresses.row(k).norm();
    if (n > 0.0) addresses.row(k) /= n;
  }
}

DiagGaussian read_prior(const Vector& w, const MemoryState& state, ReadMode mode) {
  require_state(state);
  if (w.size() != state.K()) throw DimensionMismatch("read_prior: w must have length K");
  double variance = state.sigma2;
  if (mode == ReadMode::Distributional) variance += w.dot(state.U * w);
  const Vector mean = state.R.transpose() * w;
  return {mean, Vector::Constant(state.C(), std::log(variance))};
}

MemoryState write_batch(const MemoryState& state, const Matrix& W, const Matrix& Z, CovarianceStructure structure) {
  return apply_batch(state, W, Z, Vector::Zero(W.rows()), structure);
}

MemoryState write_online(const MemoryState& state, const Vector& w, const Vector& z, CovarianceStructure structure,
                         double extra_variance) {
  require_state(state);
  if (w.size() != state.K()) throw DimensionMismatch("write_online: w must have length K");
  if (z.size() != state.C()) throw DimensionMismatch("write_online: z must have length C");
  const Vector uw = state.U * w;
  const double s = w.dot(uw) + state.sigma2 + extra_variance;
  if (!(s > 0.0) || !std::isfinite(s)) throw DegenerateVariance("write_online: innovation variance is not positive");
  const Vector gain = uw / s;
  const Eigen::RowVectorXd delta = z.transpose() - w.transpose() * state.R;
  MemoryState next = state;
  next.R.noalias() += gain * delta;
  next.U.noalias() -= gain * uw.transpose();
  finish_covariance(next.U, structure);
  return next;
}

MemoryState write_distributional(const MemoryState& state, const Matrix& W, const Matrix& mu_q, const Vector& sigma_q,
                                 CovarianceStructure structure) {
  if (sigma_q.size() != W.rows()) throw DimensionMismatch("write_distributional: Sigma_Q must have T entries");
  if ((sigma_q.array() < 0.0).any()) throw ConfigError("write_distributional: Sigma_Q must be nonnegative");
  return apply_batch(state, W, mu_q, sigma_q, structure);
}

Matrix sample_memory(const MemoryState& state, std::uint64_t seed) {
  require_state(state);
  Rng rng = make_rng(seed, "memory.sample");
  const Matrix noise = standard_normal(state.K(), state.C(), rng);
  return state.R + cholesky(state.U) * noise;
}

void save_snapshot(const std::filesystem::path& path, const MemoryState& state) {
  io::Writer out(path);
  out.magic("KMEM");
  out.u32(static_cast<std::uint32_t>(state.K()));
  out.u32(static_cast<std::uint32_t>(state.C()));
  for (Index r = 0; r < state.K(); ++r)
    for (Index c = 0; c < state.C(); ++c) out.f64(state.R(r, c));
  for (Index r = 0; r < state.K(); ++r)
    for (Index c = 0; c < state.K(); ++c) out.f64(state.U(r, c));
  out.finish();
}

MemoryState load_snapshot(const std::filesystem::path& path, double sigma2) {
  io::Reader in(path);
  in.expect_magic("KMEM");
  const Index k = in.u32();
  const Index c = in.u32();
  MemoryState s{Matrix(k, c), Matrix(k, k), sigma2};
  for (Index r = 0; r < k; ++r)
    for (Index j = 0; j < c; ++j) s.R(r, j) = in.f64();
  for (Index r = 0; r < k; ++r)
    for (Index j = 0; j < k; ++j) s.U(r, j) = in.f64();
  if (in.remaining() != 0) throw IoError(path.string() + ": trailing bytes in memory snapshot");
  return s;
}

}  // namespace kanerva::memory
