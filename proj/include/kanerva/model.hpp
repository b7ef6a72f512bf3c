#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kanerva/autodiff.hpp"
#include "kanerva/gaussian.hpp"
#include "kanerva/memory.hpp"

namespace kanerva::model {

enum class ModelKind { Kanerva, Vae };
enum class Likelihood { Bernoulli, Gaussian };

/// Shapes and switches of the generative model. Coders are MLPs with
/// `hidden_layers` ReLU layers of width `hidden`; the key projection uses a
/// single hidden layer of width `key_hidden`.
struct ModelConfig {
  ModelKind kind = ModelKind::Kanerva;
  Index input_dim = 64;
  Index y_dim = 2;
  Index code_dim = 16;    // C
  Index key_dim = 16;     // S
  Index memory_rows = 32; // K
  Index hidden = 128;
  Index hidden_layers = 2;
  Index key_hidden = 128;
  memory::ReadMode read_mode = memory::ReadMode::MeanField;
  memory::CovarianceStructure covariance = memory::CovarianceStructure::Full;
  /// Differentiate through the sequential Bayesian writes. When false the
  /// written R, U are treated as constants.
  bool unroll_writes = true;
  double sigma2 = memory::kDefaultSigma2;
  double address_input_noise = 0.2;
  Likelihood likelihood = Likelihood::Bernoulli;
  Index posterior_samples = 1;
};

struct ParamBlock {
  std::string name;
  Matrix value;
};

/// Ordered named parameter blocks. Order is fixed at construction and used
/// for checkpoints and gradient vectors.
class ParamSet {
 public:
  void add(std::string name, Matrix value);
  bool contains(const std::string& name) const { return index_.contains(name); }
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  std::vector<ParamBlock>& blocks() { return blocks_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::size_t size() const { return blocks_.size(); }
  Index scalar_count() const;

 private:
  std::vector<ParamBlock> blocks_;
  std::map<std::string, std::size_t> index_;
};

struct Model {
  ModelConfig config;
  ParamSet params;
};

/// Random initialisation: He-scaled hidden layers, small output layers,
/// unit-norm address rows, R0 = 0 and U0 = I.
Model init_model(const ModelConfig& config, std::uint64_t seed);

/// Zeroes the weights and biases of the final layer of `net`.
void zero_output_layer(Model& model, const std::string& net);

/// Prior memory p(M) = MN(R0, L Lᵀ, I) from the trained factor.
memory::MemoryState prior_memory(const Model& model);

enum class Mode { Train, Eval };

/// Element-wise noise of one episode, one row per pattern. Keeping the draws
/// explicit lets permutation and finite-difference tests freeze them.
struct EpisodeNoise {
  Matrix write_input;  // T × D_x, address-input noise for writing
  Matrix write_y;      // T × y_dim
  Matrix write_z;      // T × C
  Matrix read_input;   // T × D_x
  Matrix read_y;       // T × y_dim
  Matrix read_z;       // (samples · T) × C

  Index size() const { return write_y.rows(); }
  EpisodeNoise permuted(const std::vector<Index>& order) const;
};

EpisodeNoise draw_noise(const ModelConfig& config, Index T, std::uint64_t seed);

// Single-pattern maps.
DiagGaussian encode_y(const Model& model, const Vector& x, Mode mode, std::uint64_t noise_seed);
DiagGaussian encode_y(const Model& model, const Vector& x, const Vector& input_noise);
DiagGaussian encode_z(const Model& model, const Vector& x);
DiagGaussian posterior_z(const Model& model, const Vector& x, const Vector& prior_mean);
/// Bernoulli logits (or Gaussian means for the Gaussian likelihood).
Vector decode(const Model& model, const Vector& z);
Vector key_fn(const Model& model, const Vector& y);
Vector weights_for(const Model& model, const Vector& y);

/// Per-episode terms of the lower bound, in nats.
struct ElboBreakdown {
  double recon = 0.0;
  double kl_y = 0.0;
  double kl_z = 0.0;
  double total = 0.0;
};

/// Writes the episode into `prior` (Algorithm 2). Online writes in sampled
/// mode, one batched distributional write otherwise.
memory::MemoryState write_episode(const Model& model, const memory::MemoryState& prior, const Matrix& X,
                                  const EpisodeNoise& noise, Mode mode);

/// Lower bound of an episode whose posterior memory is already `posterior`.
ElboBreakdown elbo_episode(const Model& model, const Matrix& X, const memory::MemoryState& posterior,
                           const EpisodeNoise& noise, Mode mode);

/// Write-then-read lower bound from the learned prior (or N(0, I) for the
/// VAE); the quantity optimised in training.
ElboBreakdown episode_elbo(const Model& model, const Matrix& X, const EpisodeNoise& noise, Mode mode);

struct Gradient {
  std::vector<Matrix> blocks;  // aligned with ParamSet order
};

/// Sum of episode lower bounds and its gradient w.r.t. every parameter block.
struct ElboWithGrad {
  std::vector<ElboBreakdown> episodes;
  Gradient grad;
};
/// `kl_y_weight` scales the address KL in the differentiated objective only;
/// the reported breakdowns are always the exact bound.
ElboWithGrad elbo_and_grad(const Model& model, const std::vector<Matrix>& episodes,
                           const std::vector<EpisodeNoise>& noise, Mode mode, double kl_y_weight = 1.0);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

/// One Adam ascent/descent step on `grads` (gradients of the loss to
/// minimise), then the parameter projections: unit address rows and a
/// lower-triangular U0 factor with nonnegative diagonal.
void grad_step(Model& model, const Gradient& grads, double lr, AdamState& state);
void project_parameters(Model& model);

// KPAR checkpoint: "KPAR", block count, then per block name length, name
// bytes, rows, cols (u32 LE) and row-major f64 LE entries. Model switches
// are stored as "meta.*" 1 × 1 blocks.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

// Graph builders used by training and the gradient checks.
struct GraphParams {
  std::map<std::string, ad::Var> vars;
  const ad::Var& operator[](const std::string& name) const { return vars.at(name); }
};
GraphParams bind_params(ad::Tape& tape, const ParamSet& params, bool trainable);

struct EpisodeGraph {
  ad::Var recon;
  ad::Var kl_y;
  ad::Var kl_z;
  ad::Var total;
};
EpisodeGraph build_episode_graph(ad::Tape& tape, const Model& model, const GraphParams& p, const Matrix& X,
                                 const EpisodeNoise& noise, Mode mode);

}  // namespace kanerva::model
