#include "kanerva/model.hpp"

#include <cmath>

#include "kanerva/binary_io.hpp"
#include "kanerva/errors.hpp"

namespace kanerva::model {

namespace {

constexpr const char* kAddresses = "memory.addresses";
constexpr const char* kR0 = "memory.R0";
constexpr const char* kU0Factor = "memory.U0_factor";

struct NetShape {
  std::string name;
  std::vector<Index> widths;  // input, hidden..., output
};

std::vector<Index> coder_widths(const ModelConfig& c, Index in, Index out) {
  std::vector<Index> w{in};
  for (Index i = 0; i < c.hidden_layers; ++i) w.push_back(c.hidden);
  w.push_back(out);
  return w;
}

std::vector<NetShape> net_shapes(const ModelConfig& c) {
  std::vector<NetShape> nets;
  if (c.kind == ModelKind::Kanerva) {
    nets.push_back({"enc_y", coder_widths(c, c.input_dim, 2 * c.y_dim)});
    nets.push_back({"key", {c.y_dim, c.key_hidden, c.key_dim}});
  }
  nets.push_back({"enc_z", coder_widths(c, c.input_dim, 2 * c.code_dim)});
  if (c.kind == ModelKind::Kanerva) nets.push_back({"post_z", coder_widths(c, c.input_dim + c.code_dim, 2 * c.code_dim)});
  nets.push_back({"dec", coder_widths(c, c.code_dim, c.input_dim)});
  return nets;
}

std::string weight_name(const std::string& net, std::size_t layer) { return net + ".w" + std::to_string(layer); }
std::string bias_name(const std::string& net, std::size_t layer) { return net + ".b" + std::to_string(layer); }

std::size_t layer_count(const ModelConfig& c, const std::string& net) {
  for (const auto& s : net_shapes(c))
    if (s.name == net) return s.widths.size() - 1;
  throw ConfigError("unknown network " + net);
}

ad::Var mlp(const ModelConfig& c, const GraphParams& p, const std::string& net, ad::Var input) {
  const std::size_t layers = layer_count(c, net);
  ad::Var h = input;
  for (std::size_t l = 0; l < layers; ++l) {
    h = ad::add_row(ad::matmul(h, p[weight_name(net, l)]), p[bias_name(net, l)]);
    if (l + 1 < layers) h = ad::relu(h);
  }
  return h;
}

struct GaussianVars {
  ad::Var mean;
  ad::Var log_var;
};

GaussianVars split(ad::Var out, Index n) { return {ad::cols(out, 0, n), ad::cols(out, n, n)}; }

ad::Var reparameterize(const GaussianVars& g, const Matrix& eps) {
  ad::Tape& t = *g.mean.tape();
  return ad::add(g.mean, ad::hadamard(ad::exp(ad::scale(g.log_var, 0.5)), t.constant(eps)));
}

ad::Var address_input(ad::Tape& t, const ModelConfig& c, const Matrix& X, const Matrix& noise, Mode mode) {
  if (mode == Mode::Train && c.address_input_noise > 0.0) return t.constant(X + c.address_input_noise * noise);
  return t.constant(X);
}

ad::Var weights_graph(const ModelConfig& c, const GraphParams& p, ad::Var y) {
  return ad::matmul(mlp(c, p, "key", y), ad::transpose(p[kAddresses]));
}

struct MemoryVars {
  ad::Var R;
  ad::Var U;
};

// Sequential Bayesian writes, one scalar innovation per row. With per-row
// extra variances this equals the batch rule with Σ_z + diag(extra).
MemoryVars write_graph(const ModelConfig& c, MemoryVars mem, ad::Var W, ad::Var Z, const ad::Var* extra) {
  for (Index t = 0; t < W.rows(); ++t) {
    ad::Var w = ad::rows(W, t, 1);
    ad::Var z = ad::rows(Z, t, 1);
    ad::Var uw = ad::matmul(mem.U, ad::transpose(w));
    ad::Var s = ad::add_const(ad::matmul(w, uw), c.sigma2);
    if (extra) s = ad::add(s, ad::rows(*extra, t, 1));
    if (!(s.scalar() > 0.0) || !std::isfinite(s.scalar()))
      throw DegenerateVariance("write: innovation variance is not positive");
    ad::Var gain = ad::div_scalar(uw, s);
    ad::Var delta = ad::sub(z, ad::matmul(w, mem.R));
    mem.R = ad::add(mem.R, ad::matmul(gain, delta));
    mem.U = ad::sub(mem.U, ad::matmul(gain, ad::transpose(uw)));
    mem.U = c.covariance == memory::CovarianceStructure::Full ? ad::symmetrize(mem.U) : ad::diag_part(mem.U);
  }
  return mem;
}

MemoryVars prior_graph(ad::Tape&, const ModelConfig& c, const GraphParams& p) {
  ad::Var factor = p[kU0Factor];
  ad::Var u = ad::matmul(factor, ad::transpose(factor));
  u = c.covariance == memory::CovarianceStructure::Full ? ad::symmetrize(u) : ad::diag_part(u);
  return {p[kR0], u};
}

MemoryVars write_episode_graph(ad::Tape& t, const ModelConfig& c, const GraphParams& p, MemoryVars mem,
                               const Matrix& X, const EpisodeNoise& noise, Mode mode) {
  if (X.rows() == 0) return mem;
  GaussianVars qy = split(mlp(c, p, "enc_y", address_input(t, c, X, noise.write_input, mode)), c.y_dim);
  ad::Var W = weights_graph(c, p, reparameterize(qy, noise.write_y));
  GaussianVars qz = split(mlp(c, p, "enc_z", t.constant(X)), c.code_dim);
  if (c.read_mode == memory::ReadMode::Distributional) {
    ad::Var sigma_q = ad::scale(ad::row_sum(ad::exp(qz.log_var)), 1.0 / static_cast<double>(c.code_dim));
    return write_graph(c, mem, W, qz.mean, &sigma_q);
  }
  return write_graph(c, mem, W, reparameterize(qz, noise.write_z), nullptr);
}

ad::Var decode_loglik(const ModelConfig& c, const GraphParams& p, ad::Var z, const Matrix& X) {
  ad::Var out = mlp(c, p, "dec", z);
  if (c.likelihood == Likelihood::Bernoulli) return ad::bernoulli_loglik(out, X);
  ad::Tape& t = *z.tape();
  ad::Var log_var = ad::matmul(t.constant(Matrix::Ones(X.rows(), 1)), p["dec.log_var"]);
  return ad::gaussian_loglik(out, log_var, X);
}

ad::Var sampled_recon(const ModelConfig& c, const GraphParams& p, const GaussianVars& q, const Matrix& X,
                      const EpisodeNoise& noise) {
  const Index T = X.rows();
  const Index samples = std::max<Index>(1, c.posterior_samples);
  if (noise.read_z.rows() != samples * T) throw DimensionMismatch("episode noise: read_z rows");
  ad::Var recon;
  for (Index s = 0; s < samples; ++s) {
    ad::Var z = reparameterize(q, noise.read_z.middleRows(s * T, T));
    ad::Var term = decode_loglik(c, p, z, X);
    recon = s == 0 ? term : ad::add(recon, term);
  }
  return samples == 1 ? recon : ad::scale(recon, 1.0 / static_cast<double>(samples));
}

EpisodeGraph read_graph(ad::Tape& t, const ModelConfig& c, const GraphParams& p, MemoryVars mem, const Matrix& X,
                        const EpisodeNoise& noise, Mode mode) {
  const Index T = X.rows();
  GaussianVars qy = split(mlp(c, p, "enc_y", address_input(t, c, X, noise.read_input, mode)), c.y_dim);
  ad::Var W = weights_graph(c, p, reparameterize(qy, noise.read_y));
  ad::Var prior_mean = ad::matmul(W, mem.R);
  ad::Var prior_log_var;
  if (c.read_mode == memory::ReadMode::Distributional) {
    ad::Var quad = ad::row_sum(ad::hadamard(ad::matmul(W, mem.U), W));
    prior_log_var = ad::repeat_cols(ad::log(ad::add_const(quad, c.sigma2)), c.code_dim);
  } else {
    prior_log_var = t.constant(Matrix::Constant(T, c.code_dim, std::log(c.sigma2)));
  }
  GaussianVars qz = split(mlp(c, p, "post_z", ad::concat_cols(t.constant(X), prior_mean)), c.code_dim);

  EpisodeGraph g;
  g.recon = sampled_recon(c, p, qz, X, noise);
  ad::Var zeros_y = t.constant(Matrix::Zero(T, c.y_dim));
  g.kl_y = ad::kl_diag(qy.mean, qy.log_var, zeros_y, zeros_y);
  g.kl_z = ad::kl_diag(qz.mean, qz.log_var, prior_mean, prior_log_var);
  g.total = ad::sub(ad::sub(g.recon, g.kl_y), g.kl_z);
  return g;
}

EpisodeGraph vae_graph(ad::Tape& t, const ModelConfig& c, const GraphParams& p, const Matrix& X,
                       const EpisodeNoise& noise) {
  GaussianVars qz = split(mlp(c, p, "enc_z", t.constant(X)), c.code_dim);
  EpisodeGraph g;
  g.recon = sampled_recon(c, p, qz, X, noise);
  ad::Var zeros = t.constant(Matrix::Zero(X.rows(), c.code_dim));
  g.kl_y = t.constant(Matrix::Zero(1, 1));
  g.kl_z = ad::kl_diag(qz.mean, qz.log_var, zeros, zeros);
  g.total = ad::sub(g.recon, g.kl_z);
  return g;
}

void require_kanerva(const Model& m, const char* what) {
  if (m.config.kind != ModelKind::Kanerva) throw ConfigError(std::string(what) + " needs a Kanerva model");
}

void require_input(const Model& m, const Matrix& X, const char* what) {
  if (X.cols() != m.config.input_dim) throw DimensionMismatch(std::string(what) + ": pattern dimension");
}

ElboBreakdown breakdown(const EpisodeGraph& g) {
  ElboBreakdown b{g.recon.scalar(), g.kl_y.scalar(), g.kl_z.scalar(), 0.0};
  b.total = b.recon - b.kl_y - b.kl_z;
  return b;
}

Matrix row(const Vector& v) { return v.transpose(); }

DiagGaussian first_row(ad::Var out, Index n) {
  return {out.value().row(0).head(n).transpose(), out.value().row(0).segment(n, n).transpose()};
}

}  // namespace

void ParamSet::add(std::string name, Matrix value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter block " + name);
  index_.emplace(name, blocks_.size());
  blocks_.push_back({std::move(name), std::move(value)});
}

Matrix& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter block " + name);
  return blocks_[it->second].value;
}

const Matrix& ParamSet::at(const std::string& name) const { return const_cast<ParamSet*>(this)->at(name); }

Index ParamSet::scalar_count() const {
  Index n = 0;
  for (const auto& b : blocks_) n += b.value.size();
  return n;
}

Model init_model(const ModelConfig& c, std::uint64_t seed) {
  if (c.input_dim <= 0 || c.code_dim <= 0 || c.hidden <= 0 || c.hidden_layers < 0)
    throw ConfigError("model dimensions must be positive");
  if (c.kind == ModelKind::Kanerva && (c.y_dim <= 0 || c.key_dim <= 0 || c.memory_rows <= 0 || c.key_hidden <= 0))
    throw ConfigError("memory dimensions must be positive");
  if (!(c.sigma2 > 0.0)) throw ConfigError("sigma2 must be positive");
  Model m{c, {}};
  Rng rng = make_rng(seed, "model.init");
  for (const auto& net : net_shapes(c)) {
    const std::size_t layers = net.widths.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const Index in = net.widths[l], out = net.widths[l + 1];
      const double gain = l + 1 < layers ? std::sqrt(2.0 / in) : std::sqrt(1.0 / in);
      m.params.add(weight_name(net.name, l), gain * standard_normal(in, out, rng));
      m.params.add(bias_name(net.name, l), Matrix::Zero(1, out));
    }
  }
  if (c.likelihood == Likelihood::Gaussian) m.params.add("dec.log_var", Matrix::Zero(1, c.input_dim));
  if (c.kind == ModelKind::Kanerva) {
    Matrix a = standard_normal(c.memory_rows, c.key_dim, rng);
    memory::normalize_rows(a);
    m.params.add(kAddresses, std::move(a));
    m.params.add(kR0, Matrix::Zero(c.memory_rows, c.code_dim));
    m.params.add(kU0Factor, Matrix::Identity(c.memory_rows, c.memory_rows));
  }
  return m;
}

void zero_output_layer(Model& model, const std::string& net) {
  const std::size_t last = layer_count(model.config, net) - 1;
  model.params.at(weight_name(net, last)).setZero();
  model.params.at(bias_name(net, last)).setZero();
}

memory::MemoryState prior_memory(const Model& model) {
  require_kanerva(model, "prior_memory");
  const Matrix& factor = model.params.at(kU0Factor);
  memory::MemoryState s{model.params.at(kR0), factor * factor.transpose(), model.config.sigma2};
  if (model.config.covariance == memory::CovarianceStructure::Diagonal) s.U = Matrix(s.U.diagonal().asDiagonal());
  symmetrize(s.U);
  return s;
}

EpisodeNoise EpisodeNoise::permuted(const std::vector<Index>& order) const {
  auto take = [&](const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    const Index T = static_cast<Index>(order.size());
    for (Index block = 0; block < m.rows() / std::max<Index>(T, 1); ++block)
      for (Index i = 0; i < T; ++i) out.row(block * T + i) = m.row(block * T + order[static_cast<std::size_t>(i)]);
    return out;
  };
  return {take(write_input), take(write_y), take(write_z), take(read_input), take(read_y), take(read_z)};
}

EpisodeNoise draw_noise(const ModelConfig& c, Index T, std::uint64_t seed) {
  const Index samples = std::max<Index>(1, c.posterior_samples);
  EpisodeNoise n;
  Rng r1 = make_rng(seed, "noise.write_input");
  n.write_input = standard_normal(T, c.input_dim, r1);
  Rng r2 = make_rng(seed, "noise.write_y");
  n.write_y = standard_normal(T, c.y_dim, r2);
  Rng r3 = make_rng(seed, "noise.write_z");
  n.write_z = standard_normal(T, c.code_dim, r3);
  Rng r4 = make_rng(seed, "noise.read_input");
  n.read_input = standard_normal(T, c.input_dim, r4);
  Rng r5 = make_rng(seed, "noise.read_y");
  n.read_y = standard_normal(T, c.y_dim, r5);
  Rng r6 = make_rng(seed, "noise.read_z");
  n.read_z = standard_normal(samples * T, c.code_dim, r6);
  return n;
}

GraphParams bind_params(ad::Tape& tape, const ParamSet& params, bool trainable) {
  GraphParams p;
  for (const auto& b : params.blocks())
    p.vars.emplace(b.name, trainable ? tape.variable(b.value) : tape.constant(b.value));
  return p;
}

EpisodeGraph build_episode_graph(ad::Tape& tape, const Model& model, const GraphParams& p, const Matrix& X,
                                 const EpisodeNoise& noise, Mode mode) {
  require_input(model, X, "episode");
  const ModelConfig& c = model.config;
  if (c.kind == ModelKind::Vae) return vae_graph(tape, c, p, X, noise);
  MemoryVars mem = write_episode_graph(tape, c, p, prior_graph(tape, c, p), X, noise, mode);
  if (!c.unroll_writes) mem = {ad::stop_gradient(mem.R), ad::stop_gradient(mem.U)};
  return read_graph(tape, c, p, mem, X, noise, mode);
}

DiagGaussian encode_y(const Model& model, const Vector& x, const Vector& input_noise) {
  require_kanerva(model, "encode_y");
  if (x.size() != model.config.input_dim || input_noise.size() != x.size())
    throw DimensionMismatch("encode_y: pattern dimension");
  ad::Tape t;
  const GraphParams p = bind_params(t, model.params, false);
  const Vector in = x + model.config.address_input_noise * input_noise;
  return first_row(mlp(model.config, p, "enc_y", t.constant(row(in))), model.config.y_dim);
}

DiagGaussian encode_y(const Model& model, const Vector& x, Mode mode, std::uint64_t noise_seed) {
  Vector noise = Vector::Zero(x.size());
  if (mode == Mode::Train) {
    Rng rng = make_rng(noise_seed, "encode_y.input");
    noise = standard_normal(x.size(), 1, rng);
  }
  return encode_y(model, x, noise);
}

DiagGaussian encode_z(const Model& model, const Vector& x) {
  if (x.size() != model.config.input_dim) throw DimensionMismatch("encode_z: pattern dimension");
  ad::Tape t;
  const GraphParams p = bind_params(t, model.params, false);
  return first_row(mlp(model.config, p, "enc_z", t.constant(row(x))), model.config.code_dim);
}

DiagGaussian posterior_z(const Model& model, const Vector& x, const Vector& prior_mean) {
  require_kanerva(model, "posterior_z");
  if (x.size() != model.config.input_dim || prior_mean.size() != model.config.code_dim)
    throw DimensionMismatch("posterior_z: input dimension");
  ad::Tape t;
  const GraphParams p = bind_params(t, model.params, false);
  Vector in(x.size() + prior_mean.size());
  in << x, prior_mean;
  return first_row(mlp(model.config, p, "post_z", t.constant(row(in))), model.config.code_dim);
}

Vector decode(const Model& model, const Vector& z) {
  if (z.size() != model.config.code_dim) throw DimensionMismatch("decode: code dimension");
  ad::Tape t;
  const GraphParams p = bind_params(t, model.params, false);
  return mlp(model.config, p, "dec", t.constant(row(z))).value().row(0).transpose();
}

Vector key_fn(const Model& model, const Vector& y) {
  require_kanerva(model, "key_fn");
  if (y.size() != model.config.y_dim) throw DimensionMismatch("key_fn: y dimension");
  ad::Tape t;
  const GraphParams p = bind_params(t, model.params, false);
  return mlp(model.config, p, "key", t.constant(row(y))).value().row(0).transpose();
}

Vector weights_for(const Model& model, const Vector& y) {
  return memory::compute_weights(key_fn(model, y), model.params.at(kAddresses));
}

memory::MemoryState write_episode(const Model& model, const memory::MemoryState& prior, const Matrix& X,
                                  const EpisodeNoise& noise, Mode mode) {
  require_kanerva(model, "write_episode");
  require_input(model, X, "write_episode");
  if (X.rows() == 0) return prior;
  const ModelConfig& c = model.config;
  ad::Tape t;
  const GraphParams p = bind_params(t, model.params, false);
  GaussianVars qy = split(mlp(c, p, "enc_y", address_input(t, c, X, noise.write_input, mode)), c.y_dim);
  const Matrix W = weights_graph(c, p, reparameterize(qy, noise.write_y)).value();
  GaussianVars qz = split(mlp(c, p, "enc_z", t.constant(X)), c.code_dim);
  if (c.read_mode == memory::ReadMode::Distributional) {
    const Vector sigma_q = qz.log_var.value().array().exp().rowwise().mean();
    if (c.covariance == memory::CovarianceStructure::Full)
      return memory::write_distributional(prior, W, qz.mean.value(), sigma_q, c.covariance);
    // The diagonal projection is applied after every element, as in training.
    memory::MemoryState state = prior;
    for (Index i = 0; i < X.rows(); ++i)
      state = memory::write_online(state, W.row(i).transpose(), qz.mean.value().row(i).transpose(), c.covariance,
                                   sigma_q(i));
    return state;
  }
  const Matrix Z = reparameterize(qz, noise.write_z).value();
  memory::MemoryState state = prior;
  for (Index i = 0; i < X.rows(); ++i)
    state = memory::write_online(state, W.row(i).transpose(), Z.row(i).transpose(), c.covariance);
  return state;
}

ElboBreakdown elbo_episode(const Model& model, const Matrix& X, const memory::MemoryState& posterior,
                           const EpisodeNoise& noise, Mode mode) {
  require_input(model, X, "elbo_episode");
  ad::Tape t;
  const GraphParams p = bind_params(t, model.params, false);
  if (model.config.kind == ModelKind::Vae) return breakdown(vae_graph(t, model.config, p, X, noise));
  if (posterior.K() != model.config.memory_rows || posterior.C() != model.config.code_dim)
    throw DimensionMismatch("elbo_episode: memory shape");
  MemoryVars mem{t.constant(posterior.R), t.constant(posterior.U)};
  return breakdown(read_graph(t, model.config, p, mem, X, noise, mode));
}

ElboBreakdown episode_elbo(const Model& model, const Matrix& X, const EpisodeNoise& noise, Mode mode) {
  ad::Tape t;
  const GraphParams p = bind_params(t, model.params, false);
  return breakdown(build_episode_graph(t, model, p, X, noise, mode));
}

ElboWithGrad elbo_and_grad(const Model& model, const std::vector<Matrix>& episodes,
                           const std::vector<EpisodeNoise>& noise, Mode mode, double kl_y_weight) {
  if (episodes.size() != noise.size()) throw DimensionMismatch("elbo_and_grad: one noise set per episode");
  ad::Tape t;
  const GraphParams p = bind_params(t, model.params, true);
  ElboWithGrad out;
  ad::Var objective;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    EpisodeGraph g = build_episode_graph(t, model, p, episodes[e], noise[e], mode);
    out.episodes.push_back(breakdown(g));
    ad::Var term = g.total;
    if (kl_y_weight != 1.0 && model.config.kind == ModelKind::Kanerva)
      term = ad::add(term, ad::scale(g.kl_y, 1.0 - kl_y_weight));
    objective = e == 0 ? term : ad::add(objective, term);
  }
  if (!episodes.empty()) t.backward(objective);
  for (const auto& b : model.params.blocks()) out.grad.blocks.push_back(p[b.name].grad());
  return out;
}

void project_parameters(Model& model) {
  if (model.config.kind != ModelKind::Kanerva) return;
  memory::normalize_rows(model.params.at(kAddresses));
  Matrix& factor = model.params.at(kU0Factor);
  factor = factor.triangularView<Eigen::Lower>().toDenseMatrix();
  if (model.config.covariance == memory::CovarianceStructure::Diagonal) factor = Matrix(factor.diagonal().asDiagonal());
  // Flipping a column's sign leaves L Lᵀ unchanged.
  for (Index j = 0; j < factor.cols(); ++j)
    if (factor(j, j) < 0.0) factor.col(j) *= -1.0;
}

void grad_step(Model& model, const Gradient& grads, double lr, AdamState& state) {
  auto& blocks = model.params.blocks();
  if (grads.blocks.size() != blocks.size()) throw DimensionMismatch("grad_step: gradient block count");
  if (state.m.empty()) {
    for (const auto& b : blocks) {
      state.m.push_back(Matrix::Zero(b.value.rows(), b.value.cols()));
      state.v.push_back(Matrix::Zero(b.value.rows(), b.value.cols()));
    }
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (grads.blocks[i].rows() != blocks[i].value.rows() || grads.blocks[i].cols() != blocks[i].value.cols())
      throw DimensionMismatch("grad_step: gradient shape for " + blocks[i].name);
    if (!grads.blocks[i].allFinite()) throw NonFinite("grad_step: non-finite gradient for " + blocks[i].name);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Matrix& g = grads.blocks[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.cwiseAbs2();
    blocks[i].value.array() -=
        lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + state.eps);
    if (!blocks[i].value.allFinite()) throw NonFinite("grad_step: non-finite parameter " + blocks[i].name);
  }
  project_parameters(model);
}

namespace {

std::vector<std::pair<std::string, double>> meta_entries(const ModelConfig& c) {
  return {
      {"meta.kind", c.kind == ModelKind::Kanerva ? 0.0 : 1.0},
      {"meta.input_dim", static_cast<double>(c.input_dim)},
      {"meta.y_dim", static_cast<double>(c.y_dim)},
      {"meta.code_dim", static_cast<double>(c.code_dim)},
      {"meta.key_dim", static_cast<double>(c.key_dim)},
      {"meta.memory_rows", static_cast<double>(c.memory_rows)},
      {"meta.hidden", static_cast<double>(c.hidden)},
      {"meta.hidden_layers", static_cast<double>(c.hidden_layers)},
      {"meta.key_hidden", static_cast<double>(c.key_hidden)},
      {"meta.distributional", c.read_mode == memory::ReadMode::Distributional ? 1.0 : 0.0},
      {"meta.diag_u", c.covariance == memory::CovarianceStructure::Diagonal ? 1.0 : 0.0},
      {"meta.unroll", c.unroll_writes ? 1.0 : 0.0},
      {"meta.sigma2", c.sigma2},
      {"meta.address_input_noise", c.address_input_noise},
      {"meta.gaussian_likelihood", c.likelihood == Likelihood::Gaussian ? 1.0 : 0.0},
      {"meta.posterior_samples", static_cast<double>(c.posterior_samples)},
  };
}

void write_block(io::Writer& out, const std::string& name, const Matrix& m) {
  out.u32(static_cast<std::uint32_t>(name.size()));
  out.str(name);
  out.u32(static_cast<std::uint32_t>(m.rows()));
  out.u32(static_cast<std::uint32_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) out.f64(m(r, c));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  const auto meta = meta_entries(model.config);
  io::Writer out(path);
  out.magic("KPAR");
  out.u32(static_cast<std::uint32_t>(meta.size() + model.params.size()));
  for (const auto& [name, v] : meta) write_block(out, name, Matrix::Constant(1, 1, v));
  for (const auto& b : model.params.blocks()) write_block(out, b.name, b.value);
  out.finish();
}

Model load_checkpoint(const std::filesystem::path& path) {
  io::Reader in(path);
  in.expect_magic("KPAR");
  const std::uint32_t count = in.u32();
  std::map<std::string, double> meta;
  std::vector<ParamBlock> blocks;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = in.str(in.u32());
    const Index rows = in.u32();
    const Index cols = in.u32();
    if (static_cast<std::size_t>(rows * cols) * 8 > in.remaining()) throw IoError(path.string() + ": truncated block");
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = in.f64();
    if (name.starts_with("meta.")) {
      meta[name] = m(0, 0);
    } else {
      blocks.push_back({name, std::move(m)});
    }
  }
  auto get = [&](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw CheckpointMismatch(path.string() + ": missing " + key);
    return it->second;
  };
  ModelConfig c;
  c.kind = get("meta.kind") == 0.0 ? ModelKind::Kanerva : ModelKind::Vae;
  c.input_dim = static_cast<Index>(get("meta.input_dim"));
  c.y_dim = static_cast<Index>(get("meta.y_dim"));
  c.code_dim = static_cast<Index>(get("meta.code_dim"));
  c.key_dim = static_cast<Index>(get("meta.key_dim"));
  c.memory_rows = static_cast<Index>(get("meta.memory_rows"));
  c.hidden = static_cast<Index>(get("meta.hidden"));
  c.hidden_layers = static_cast<Index>(get("meta.hidden_layers"));
  c.key_hidden = static_cast<Index>(get("meta.key_hidden"));
  c.read_mode = get("meta.distributional") != 0.0 ? memory::ReadMode::Distributional : memory::ReadMode::MeanField;
  c.covariance = get("meta.diag_u") != 0.0 ? memory::CovarianceStructure::Diagonal : memory::CovarianceStructure::Full;
  c.unroll_writes = get("meta.unroll") != 0.0;
  c.sigma2 = get("meta.sigma2");
  c.address_input_noise = get("meta.address_input_noise");
  c.likelihood = get("meta.gaussian_likelihood") != 0.0 ? Likelihood::Gaussian : Likelihood::Bernoulli;
  c.posterior_samples = static_cast<Index>(get("meta.posterior_samples"));

  Model m = init_model(c, 0);
  if (blocks.size() != m.params.size()) throw CheckpointMismatch(path.string() + ": parameter block count");
  for (auto& b : blocks) {
    if (!m.params.contains(b.name)) throw CheckpointMismatch(path.string() + ": unexpected block " + b.name);
    Matrix& dst = m.params.at(b.name);
    if (dst.rows() != b.value.rows() || dst.cols() != b.value.cols())
      throw CheckpointMismatch(path.string() + ": shape of " + b.name);
    dst = std::move(b.value);
  }
  return m;
}

}  // namespace kanerva::model
