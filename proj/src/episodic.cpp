#include "kanerva/episodic.hpp"

#include <cmath>
#include <cstdio>

#include "kanerva/errors.hpp"
#include "kanerva/images.hpp"

namespace kanerva::episodic {

namespace {

Vector sigmoid(const Vector& logits) { return (1.0 + (-logits.array()).exp()).inverse(); }

Vector decode_probabilities(const model::Model& m, const Vector& z) {
  const Vector out = model::decode(m, z);
  return m.config.likelihood == model::Likelihood::Bernoulli ? sigmoid(out) : out;
}

void require_kanerva(const model::Model& m, const char* what) {
  if (m.config.kind != model::ModelKind::Kanerva) throw ConfigError(std::string(what) + " needs a Kanerva model");
}

}  // namespace

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper_omniglot() {
  TrainConfig c;
  c.model.input_dim = 28 * 28;
  c.model.code_dim = 100;
  c.model.memory_rows = 64;
  c.model.key_dim = 50;
  c.episode_length = 32;
  c.batch = 16;
  c.lr = 1e-4;
  return c;
}

MetricsRow per_sample(std::int64_t step, const std::vector<model::ElboBreakdown>& episodes, Index T) {
  MetricsRow row{step, 0.0, 0.0, 0.0, 0.0};
  if (episodes.empty() || T <= 0) return row;
  const double scale = 1.0 / (static_cast<double>(episodes.size()) * static_cast<double>(T));
  double total = 0.0;
  for (const auto& e : episodes) {
    row.recon += e.recon;
    row.kl_y += e.kl_y;
    row.kl_z += e.kl_z;
    total += e.total;
  }
  row.recon *= scale;
  row.kl_y *= scale;
  row.kl_z *= scale;
  row.neg_elbo_per_sample = -total * scale;
  return row;
}

std::uint64_t episode_seed(std::uint64_t seed, std::string_view purpose, Index episode) {
  return substream_seed(seed, purpose, static_cast<std::uint64_t>(episode));
}

TrainResult train(const TrainConfig& config, const data::LabelledPatterns& train_set,
                  const std::function<void(const MetricsRow&)>& on_step) {
  if (config.episode_length < 1 || config.batch < 1 || config.steps < 0 || !(config.lr > 0.0))
    throw ConfigError("train: T, batch and lr must be positive and steps nonnegative");
  if (train_set.dim() != config.model.input_dim) throw ConfigError("train: dataset dimension differs from model input");
  TrainResult result{model::init_model(config.model, config.seed), {}, std::nullopt};
  model::AdamState adam;
  Rng episode_rng = make_rng(config.seed, "train.episodes");
  const Index T = config.episode_length;
  const double loss_scale = -1.0 / (static_cast<double>(config.batch) * static_cast<double>(T));

  for (std::int64_t step = 1; step <= config.steps; ++step) {
    std::vector<Matrix> episodes;
    std::vector<model::EpisodeNoise> noise;
    for (Index b = 0; b < config.batch; ++b) {
      episodes.push_back(data::sample_episode(train_set, T, std::nullopt, episode_rng).patterns);
      if (config.model.likelihood == model::Likelihood::Gaussian) {
        // Uniform dequantisation noise on continuous pixels.
        Rng dq = make_rng(episode_seed(config.seed, "train.dequantise", (step - 1) * config.batch + b), "uniform");
        std::uniform_real_distribution<double> u(0.0, 1.0 / 256.0);
        for (Index i = 0; i < episodes.back().size(); ++i) episodes.back().data()[i] += u(dq);
      }
      noise.push_back(model::draw_noise(config.model, T,
                                        episode_seed(config.seed, "train.noise", (step - 1) * config.batch + b)));
    }
    model::Model candidate = result.model;
    model::AdamState next_adam = adam;
    try {
      const double kl_y_weight =
          config.kl_y_warmup > 0 ? std::min(1.0, static_cast<double>(step) / static_cast<double>(config.kl_y_warmup))
                                 : 1.0;
      model::ElboWithGrad eg = model::elbo_and_grad(candidate, episodes, noise, model::Mode::Train, kl_y_weight);
      for (auto& g : eg.grad.blocks) g *= loss_scale;
      const MetricsRow row = per_sample(step, eg.episodes, T);
      if (!std::isfinite(row.neg_elbo_per_sample)) throw NonFinite("train: non-finite lower bound");
      model::grad_step(candidate, eg.grad, config.lr, next_adam);
      result.metrics.push_back(row);
      if (on_step) on_step(row);
    } catch (const NumericError& e) {
      result.abort_reason = "step " + std::to_string(step) + ": " + e.what();
      return result;
    }
    result.model = std::move(candidate);
    adam = std::move(next_adam);
  }
  return result;
}

MetricsRow evaluate(const model::Model& m, const data::LabelledPatterns& patterns, Index T, Index episodes,
                    std::optional<int> class_count, std::uint64_t seed) {
  if (episodes < 1 || T < 1) throw ConfigError("evaluate: need at least one episode of length >= 1");
  Rng rng = make_rng(seed, "eval.episodes");
  std::vector<model::ElboBreakdown> results;
  for (Index e = 0; e < episodes; ++e) {
    const Matrix X = data::sample_episode(patterns, T, class_count, rng).patterns;
    const model::EpisodeNoise noise = model::draw_noise(m.config, T, episode_seed(seed, "eval.noise", e));
    results.push_back(model::episode_elbo(m, X, noise, model::Mode::Eval));
  }
  return per_sample(0, results, T);
}

memory::MemoryState write_episode(const model::Model& m, const Matrix& X, std::uint64_t seed) {
  require_kanerva(m, "write_episode");
  const model::EpisodeNoise noise = model::draw_noise(m.config, X.rows(), seed);
  return model::write_episode(m, model::prior_memory(m), X, noise, model::Mode::Eval);
}

std::vector<ReadStep> iterative_read_gen(const model::Model& m, const memory::MemoryState& mem, const Vector& x,
                                         int iterations, std::uint64_t seed) {
  require_kanerva(m, "iterative_read_gen");
  if (iterations < 1) throw ConfigError("iterative_read_gen: need at least one iteration");
  if (x.size() != m.config.input_dim) throw DimensionMismatch("iterative_read_gen: pattern dimension");
  Rng rng = make_rng(seed, "iterative_read");
  std::vector<ReadStep> steps;
  Vector query = x;
  for (int i = 0; i < iterations; ++i) {
    const DiagGaussian qy = model::encode_y(m, query, model::Mode::Eval, 0);
    const Vector w = model::weights_for(m, qy.sample(rng));
    const DiagGaussian prior = memory::read_prior(w, mem, memory::ReadMode::MeanField);
    const Vector z = model::posterior_z(m, query, prior.mean).sample(rng);
    ReadStep s;
    s.probabilities = decode_probabilities(m, z);
    if (m.config.likelihood == model::Likelihood::Bernoulli) {
      s.sample.resize(s.probabilities.size());
      for (Index d = 0; d < s.sample.size(); ++d)
        s.sample(d) = std::bernoulli_distribution(s.probabilities(d))(rng) ? 1.0 : 0.0;
    } else {
      s.sample = s.probabilities;
    }
    query = s.sample;
    steps.push_back(std::move(s));
  }
  return steps;
}

std::vector<std::vector<Vector>> generate(const model::Model& m, const memory::MemoryState& mem, int iterations,
                                          int count, std::uint64_t seed) {
  require_kanerva(m, "generate");
  if (iterations < 0 || count < 0) throw ConfigError("generate: counts must be nonnegative");
  std::vector<std::vector<Vector>> out;
  for (int i = 0; i < count; ++i) {
    Rng rng = make_rng(seed, "generate", static_cast<std::uint64_t>(i));
    const Vector y = standard_normal(m.config.y_dim, 1, rng);
    const Vector w = model::weights_for(m, y);
    const DiagGaussian prior = memory::read_prior(w, mem, memory::ReadMode::MeanField);
    const Vector p = decode_probabilities(m, prior.sample(rng));
    Vector x(p.size());
    for (Index d = 0; d < p.size(); ++d) x(d) = std::bernoulli_distribution(std::clamp(p(d), 0.0, 1.0))(rng) ? 1.0 : 0.0;
    std::vector<Vector> seq{p};
    if (iterations > 0)
      for (auto& s : iterative_read_gen(m, mem, x, iterations, substream_seed(seed, "generate.refine", i)))
        seq.push_back(std::move(s.probabilities));
    out.push_back(std::move(seq));
  }
  return out;
}

Interpolation interpolate(const model::Model& m, const memory::MemoryState& mem, const Vector& x1, const Vector& x2,
                          int steps) {
  require_kanerva(m, "interpolate");
  if (steps < 2) throw ConfigError("interpolate: need at least two steps");
  const Vector w1 = model::weights_for(m, model::encode_y(m, x1, model::Mode::Eval, 0).mean);
  const Vector w2 = model::weights_for(m, model::encode_y(m, x2, model::Mode::Eval, 0).mean);
  Interpolation out;
  for (int j = 0; j < steps; ++j) {
    const double alpha = static_cast<double>(j) / static_cast<double>(steps - 1);
    Vector w = (1.0 - alpha) * w1 + alpha * w2;
    if (j == 0) w = w1;
    if (j == steps - 1) w = w2;
    const Vector mean = memory::read_prior(w, mem, memory::ReadMode::MeanField).mean;
    out.alphas.push_back(alpha);
    out.images.push_back(decode_probabilities(m, mean));
    out.read_means.push_back(mean);
    out.weights.push_back(std::move(w));
  }
  return out;
}

Vector occlude(const Vector& x, int side, int block_size, Rng& rng) {
  if (block_size < 0 || block_size > side) throw ConfigError("occlude: block size must lie in [0, side]");
  Vector out = x;
  if (block_size == 0) return out;
  std::uniform_int_distribution<int> pos(0, side - block_size);
  const int r0 = pos(rng), c0 = pos(rng);
  for (int r = r0; r < r0 + block_size; ++r)
    for (int c = c0; c < c0 + block_size; ++c) out(r * side + c) = 0.0;
  return out;
}

DenoiseResult denoise(const model::Model& m, const data::LabelledPatterns& patterns, Index T, int block_size,
                      int iterations, int trials, int side, std::uint64_t seed, int keep_examples) {
  require_kanerva(m, "denoise");
  if (trials < 1 || iterations < 1) throw ConfigError("denoise: trials and iterations must be positive");
  if (static_cast<Index>(side) * side != m.config.input_dim) throw ConfigError("denoise: side does not match input");
  DenoiseResult out;
  out.error.assign(static_cast<std::size_t>(iterations + 1), 0.0);
  Rng rng = make_rng(seed, "denoise");
  for (int trial = 0; trial < trials; ++trial) {
    const data::Episode ep = data::sample_episode(patterns, T, std::nullopt, rng);
    const memory::MemoryState mem = write_episode(m, ep.patterns, episode_seed(seed, "denoise.write", trial));
    const Index target = std::uniform_int_distribution<Index>(0, T - 1)(rng);
    const Vector original = ep.patterns.row(target).transpose();
    const Vector corrupted = occlude(original, side, block_size, rng);
    const auto steps = iterative_read_gen(m, mem, corrupted, iterations, episode_seed(seed, "denoise.read", trial));
    out.error[0] += (corrupted - original).cwiseAbs().mean();
    std::vector<Vector> row{original, corrupted};
    for (int i = 0; i < iterations; ++i) {
      const Vector shown = images::threshold(steps[static_cast<std::size_t>(i)].probabilities);
      out.error[static_cast<std::size_t>(i + 1)] += (shown - original).cwiseAbs().mean();
      row.push_back(shown);
    }
    if (trial < keep_examples) out.examples.push_back(std::move(row));
  }
  for (auto& e : out.error) e /= trials;
  return out;
}

std::vector<ScalingCell> eval_episode_scaling(const model::Model& m, const data::LabelledPatterns& patterns,
                                              const std::vector<Index>& T_list, const std::vector<int>& class_counts,
                                              Index episodes, std::uint64_t seed) {
  std::vector<ScalingCell> cells;
  for (int classes : class_counts)
    for (Index T : T_list) {
      const std::uint64_t cell_seed = substream_seed(seed, "scaling", static_cast<std::uint64_t>(T) * 1000 + classes);
      const MetricsRow r = evaluate(m, patterns, T, episodes, classes, cell_seed);
      cells.push_back({T, classes, r.neg_elbo_per_sample, -r.recon});
    }
  return cells;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "step,neg_elbo_per_sample,recon,kl_y,kl_z\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + ',' + format_number(r.neg_elbo_per_sample) + ',' + format_number(r.recon) + ',' +
           format_number(r.kl_y) + ',' + format_number(r.kl_z) + '\n';
  }
  return out;
}

}  // namespace kanerva::episodic
