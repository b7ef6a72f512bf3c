#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kanerva/data.hpp"
#include "kanerva/model.hpp"

namespace kanerva::episodic {

struct TrainConfig {
  model::ModelConfig model;
  Index episode_length = 16;  // T
  Index batch = 4;            // episodes per step
  double lr = 1e-4;
  std::int64_t steps = 20000;
  std::uint64_t seed = 1;
  /// Steps over which the weight of the address KL in the training
  /// objective ramps linearly from 0 to 1 (0: exact bound throughout).
  std::int64_t kl_y_warmup = 5000;

  /// K=32, C=16, S=16, T=16 on 8 × 8 glyphs.
  static TrainConfig desk();
  /// K=64, C=100, S=50, T=32, batch 16, lr 1e-4 on 28 × 28 inputs.
  static TrainConfig paper_omniglot();
};

/// Per-sample (divided by T) batch means of one training step.
struct MetricsRow {
  std::int64_t step = 0;
  double neg_elbo_per_sample = 0.0;
  double recon = 0.0;
  double kl_y = 0.0;
  double kl_z = 0.0;
};

MetricsRow per_sample(std::int64_t step, const std::vector<model::ElboBreakdown>& episodes, Index T);

struct TrainResult {
  model::Model model;  // last good parameters
  std::vector<MetricsRow> metrics;
  std::optional<std::string> abort_reason;
};

/// Adam on the negative lower bound: every step samples `batch` episodes,
/// writes each into the learned prior and reads it back.
TrainResult train(const TrainConfig& config, const data::LabelledPatterns& train_set,
                  const std::function<void(const MetricsRow&)>& on_step = {});

/// Held-out lower bound, per sample, averaged over `episodes` episodes.
MetricsRow evaluate(const model::Model& model, const data::LabelledPatterns& patterns, Index T, Index episodes,
                    std::optional<int> class_count, std::uint64_t seed);

/// Deterministic per-episode noise seed used by evaluation routines.
std::uint64_t episode_seed(std::uint64_t seed, std::string_view purpose, Index episode);

/// Writes an episode from the model's learned prior (Algorithm 2).
memory::MemoryState write_episode(const model::Model& model, const Matrix& X, std::uint64_t seed);

struct ReadStep {
  Vector probabilities;  // decoder output p(x | z)
  Vector sample;         // the query fed to the next iteration
};

/// Algorithm 1: encode, address, read the mean, refine with the posterior,
/// decode and sample the next query. Returns all n steps.
std::vector<ReadStep> iterative_read_gen(const model::Model& model, const memory::MemoryState& memory,
                                         const Vector& x, int iterations, std::uint64_t seed);

/// Draws y ~ N(0, I), reads z ~ N(wᵀR, σ²I), decodes and then refines with
/// `iterations` rounds of iterative reading. Entry [i][k] holds the
/// probabilities of sample i after k refinements.
std::vector<std::vector<Vector>> generate(const model::Model& model, const memory::MemoryState& memory,
                                          int iterations, int count, std::uint64_t seed);

struct Interpolation {
  std::vector<double> alphas;
  std::vector<Vector> weights;
  std::vector<Vector> read_means;
  std::vector<Vector> images;  // decoder probabilities
};

/// Linear interpolation between the access weights of x1 and x2 (from the
/// mean of q(y|x)); each weight vector is read with the memory mean and decoded.
Interpolation interpolate(const model::Model& model, const memory::MemoryState& memory, const Vector& x1,
                          const Vector& x2, int steps);

struct DenoiseResult {
  std::vector<double> error;  // index 0: corrupted input, i: after i iterations
  std::vector<std::vector<Vector>> examples;  // original, corrupted, iterations
};

/// Occludes a random block of each stored pattern and measures the mean
/// pixel error of the thresholded reconstruction per reading iteration.
DenoiseResult denoise(const model::Model& model, const data::LabelledPatterns& patterns, Index T, int block_size,
                      int iterations, int trials, int side, std::uint64_t seed, int keep_examples = 8);

Vector occlude(const Vector& x, int side, int block_size, Rng& rng);

struct ScalingCell {
  Index T = 0;
  int classes = 0;
  double neg_elbo_per_sample = 0.0;
  double recon_per_sample = 0.0;
};

std::vector<ScalingCell> eval_episode_scaling(const model::Model& model, const data::LabelledPatterns& patterns,
                                              const std::vector<Index>& T_list, const std::vector<int>& class_counts,
                                              Index episodes, std::uint64_t seed);

/// Header `step,neg_elbo_per_sample,recon,kl_y,kl_z`, 10 significant digits.
std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string format_number(double v);

}  // namespace kanerva::episodic
