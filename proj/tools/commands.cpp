#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <iostream>

#include <json.hpp>

#include "kanerva/binary_io.hpp"
#include "kanerva/data.hpp"
#include "kanerva/episodic.hpp"
#include "kanerva/errors.hpp"
#include "kanerva/images.hpp"
#include "kanerva/sdm.hpp"

#ifndef KANERVA_GIT_DESCRIBE
#define KANERVA_GIT_DESCRIBE "unknown"
#endif

namespace kanerva::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using episodic::format_number;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Collects artifacts of one run and writes the manifest last.
class Run {
 public:
  explicit Run(const Settings& s) : settings_(s), out_(s.text("out")), started_(utc_now()) {}

  const fs::path& dir() const { return out_; }

  void open() {
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) throw IoError("cannot create output directory " + out_.string() + ": " + ec.message());
  }

  fs::path file(const std::string& name) {
    artifacts_.push_back(name);
    const fs::path p = out_ / name;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
  }

  void text(const std::string& name, const std::string& contents) { io::write_text(file(name), contents); }

  void finish(const std::string& status = "ok") {
    json j;
    j["command"] = settings_.command();
    j["config"] = settings_.values();
    j["seed"] = settings_.seed();
    j["git_describe"] = KANERVA_GIT_DESCRIBE;
    j["out_dir"] = out_.string();
    j["started"] = started_;
    j["finished"] = utc_now();
    j["status"] = status;
    j["artifacts"] = artifacts_;
    io::write_text(out_ / "manifest.json", j.dump(2) + "\n");
  }

 private:
  const Settings& settings_;
  fs::path out_;
  std::string started_;
  std::vector<std::string> artifacts_;
};

// Shared option groups.
std::vector<OptionSpec> with_common(std::vector<OptionSpec> specs) {
  specs.push_back({"out", Kind::Path, "out", "output directory"});
  specs.push_back({"seed", Kind::Int, "1", "run seed"});
  return specs;
}

std::vector<OptionSpec> dataset_specs() {
  return {{"dataset", Kind::Path, "", "KDS1 dataset (empty: generate the toy glyphs)"},
          {"data-seed", Kind::Int, "1", "seed of the generated glyphs when no dataset is given"},
          {"split", Kind::Choice, "test", "split to evaluate on", {"train", "test"}}};
}

std::vector<OptionSpec> checkpoint_specs() {
  auto s = dataset_specs();
  s.insert(s.begin(), {"checkpoint", Kind::Path, "", "trained KPAR checkpoint"});
  return s;
}

template <class... Groups>
std::vector<OptionSpec> join(Groups... groups) {
  std::vector<OptionSpec> out;
  (out.insert(out.end(), groups.begin(), groups.end()), ...);
  return with_common(std::move(out));
}

data::Dataset load_data(const Settings& s) {
  if (!s.text("dataset").empty()) return data::load_dataset(s.text("dataset"));
  return data::make_glyphs(data::GlyphConfig{}, static_cast<std::uint64_t>(s.nonnegative("data-seed")));
}

const data::LabelledPatterns& split(const Settings& s, const data::Dataset& d) {
  const auto& part = s.text("split") == "train" ? d.train : d.test;
  if (part.size() == 0) throw EmptyDataset("the " + s.text("split") + " split is empty");
  return part;
}

model::Model load_model(const Settings& s, const data::Dataset& d) {
  if (s.text("checkpoint").empty()) throw ConfigError("'checkpoint' is required");
  model::Model m = model::load_checkpoint(s.text("checkpoint"));
  if (m.config.input_dim != d.dim())
    throw CheckpointMismatch("checkpoint expects patterns of dimension " + std::to_string(m.config.input_dim) +
                             " but the dataset has " + std::to_string(d.dim()));
  return m;
}

int image_side(const model::Model& m) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m.config.input_dim))));
  if (static_cast<Index>(side) * side != m.config.input_dim)
    throw ConfigError("image output needs square patterns; input dimension is " + std::to_string(m.config.input_dim));
  return side;
}

void require_kanerva(const model::Model& m, const Settings& s) {
  if (m.config.kind != model::ModelKind::Kanerva)
    throw ConfigError("command '" + s.command() + "' needs a Kanerva checkpoint, not a VAE");
}

void write_grid(Run& run, const std::string& stem, const std::vector<std::vector<Vector>>& grid, int side) {
  images::write_montage(run.file(stem + ".pgm"), grid, side, side);
  for (std::size_t r = 0; r < grid.size(); ++r)
    for (std::size_t c = 0; c < grid[r].size(); ++c)
      images::write_pgm(run.file(stem + "/r" + std::to_string(r) + "_c" + std::to_string(c) + ".pgm"), grid[r][c], side,
                        side);
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const Settings& s) {
  data::GlyphConfig g;
  g.classes = static_cast<int>(s.positive("classes"));
  g.train = s.nonnegative("train");
  g.test = s.nonnegative("test");
  g.flip = s.real("flip");
  g.side = static_cast<int>(s.positive("side"));
  g.prototype_side = static_cast<int>(s.positive("prototype-side"));
  if (!(g.flip >= 0 && g.flip <= 1)) throw ConfigError("'flip' must lie in [0, 1]");
  const data::Dataset d = data::make_glyphs(g, s.seed());

  Run run(s);
  run.open();
  data::save_dataset(run.file("glyphs.kds1"), d);
  std::vector<std::vector<Vector>> preview(1);
  for (Index i = 0; i < std::min<Index>(16, d.train.size()); ++i) preview[0].push_back(d.train.patterns.row(i).transpose());
  images::write_montage(run.file("preview.pgm"), preview, g.side, g.side);
  run.finish();
  return 0;
}

// ---------------------------------------------------------------- train

episodic::TrainConfig train_config(const Settings& s) {
  episodic::TrainConfig c;
  model::ModelConfig& m = c.model;
  m.kind = s.text("model") == "vae" ? model::ModelKind::Vae : model::ModelKind::Kanerva;
  m.read_mode = s.text("memory-mode") == "distributional" ? memory::ReadMode::Distributional : memory::ReadMode::MeanField;
  m.covariance = s.flag("diag-u") ? memory::CovarianceStructure::Diagonal : memory::CovarianceStructure::Full;
  m.unroll_writes = s.flag("unroll");
  m.likelihood = s.text("likelihood") == "gaussian" ? model::Likelihood::Gaussian : model::Likelihood::Bernoulli;
  m.memory_rows = s.positive("memory-rows");
  m.code_dim = s.positive("code-dim");
  m.key_dim = s.positive("key-dim");
  m.y_dim = s.positive("y-dim");
  m.hidden = s.positive("hidden");
  m.hidden_layers = s.nonnegative("hidden-layers");
  m.key_hidden = s.positive("key-hidden");
  m.address_input_noise = s.real("address-noise");
  m.posterior_samples = s.positive("posterior-samples");
  if (m.address_input_noise < 0) throw ConfigError("'address-noise' must be nonnegative");
  c.steps = s.nonnegative("steps");
  c.batch = s.positive("batch");
  c.episode_length = s.positive("episode-length");
  c.lr = s.real("lr");
  c.kl_y_warmup = s.nonnegative("kl-y-warmup");
  if (!(c.lr > 0)) throw ConfigError("'lr' must be positive");
  c.seed = s.seed();
  return c;
}

std::vector<OptionSpec> train_specs() {
  const episodic::TrainConfig d = episodic::TrainConfig::desk();
  auto str = [](auto v) { return std::to_string(v); };
  return {
      {"model", Kind::Choice, "kanerva", "architecture", {"kanerva", "vae"}},
      {"memory-mode", Kind::Choice, "mean-field", "memory reading and writing", {"mean-field", "distributional"}},
      {"diag-u", Kind::Bool, "false", "restrict the memory row covariance to its diagonal"},
      {"unroll", Kind::Bool, d.model.unroll_writes ? "true" : "false", "differentiate through the memory writes"},
      {"likelihood", Kind::Choice, "bernoulli", "pixel likelihood", {"bernoulli", "gaussian"}},
      {"steps", Kind::Int, str(d.steps), "gradient steps"},
      {"batch", Kind::Int, str(d.batch), "episodes per step"},
      {"episode-length", Kind::Int, str(d.episode_length), "patterns per episode (T)"},
      {"lr", Kind::Real, format_number(d.lr), "Adam learning rate"},
      {"kl-y-warmup", Kind::Int, str(d.kl_y_warmup), "steps to ramp the address KL weight from 0 to 1"},
      {"memory-rows", Kind::Int, str(d.model.memory_rows), "memory rows (K)"},
      {"code-dim", Kind::Int, str(d.model.code_dim), "code size (C)"},
      {"key-dim", Kind::Int, str(d.model.key_dim), "address size (S)"},
      {"y-dim", Kind::Int, str(d.model.y_dim), "addressing latent size"},
      {"hidden", Kind::Int, str(d.model.hidden), "coder hidden width"},
      {"hidden-layers", Kind::Int, str(d.model.hidden_layers), "coder hidden layers"},
      {"key-hidden", Kind::Int, str(d.model.key_hidden), "key network hidden width"},
      {"address-noise", Kind::Real, format_number(d.model.address_input_noise), "input noise std of the address encoder"},
      {"posterior-samples", Kind::Int, "1", "samples of z per pattern in the bound"},
      {"log-every", Kind::Int, "1000", "progress line interval on stderr (0: silent)"},
  };
}

int cmd_train(const Settings& s) {
  const episodic::TrainConfig c = train_config(s);
  const auto log_every = s.nonnegative("log-every");
  const data::Dataset d = load_data(s);
  if (d.train.size() == 0) throw EmptyDataset("the training split is empty");
  episodic::TrainConfig cfg = c;
  cfg.model.input_dim = d.dim();  // the pattern size always comes from the data

  Run run(s);
  const episodic::TrainResult r = episodic::train(cfg, d.train, [&](const episodic::MetricsRow& row) {
    if (log_every > 0 && row.step % log_every == 0)
      std::cerr << "step " << row.step << " neg_elbo_per_sample " << format_number(row.neg_elbo_per_sample) << "\n";
  });
  run.open();
  run.text("metrics.csv", episodic::metrics_csv(r.metrics));
  model::save_checkpoint(run.file("model.kpar"), r.model);
  if (r.abort_reason) {
    run.finish("aborted: " + *r.abort_reason);
    throw NonFinite("training aborted at " + *r.abort_reason + "; last good checkpoint kept");
  }
  run.finish();
  return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Settings& s) {
  const data::Dataset d = load_data(s);
  const model::Model m = load_model(s, d);
  const auto& part = split(s, d);
  const Index T = s.positive("episode-length"), episodes = s.positive("episodes");
  const auto classes = s.nonnegative("classes");
  const auto row = episodic::evaluate(m, part, T, episodes,
                                      classes > 0 ? std::optional<int>(static_cast<int>(classes)) : std::nullopt, s.seed());
  Run run(s);
  run.open();
  run.text("eval.csv", "episodes,T,classes,neg_elbo_per_sample,recon,kl_y,kl_z\n" + std::to_string(episodes) + ',' +
                           std::to_string(T) + ',' + std::to_string(classes) + ',' +
                           format_number(row.neg_elbo_per_sample) + ',' + format_number(row.recon) + ',' +
                           format_number(row.kl_y) + ',' + format_number(row.kl_z) + '\n');
  run.finish();
  return 0;
}

// ---------------------------------------------------------------- denoise

int cmd_denoise(const Settings& s) {
  const data::Dataset d = load_data(s);
  const model::Model m = load_model(s, d);
  require_kanerva(m, s);
  const int side = image_side(m);
  const auto block = s.nonnegative("block-size");
  if (block > side) throw ConfigError("'block-size' exceeds the image side");
  const auto res = episodic::denoise(m, split(s, d), s.positive("episode-length"), static_cast<int>(block),
                                     static_cast<int>(s.positive("iterations")), static_cast<int>(s.positive("trials")),
                                     side, s.seed(), static_cast<int>(s.nonnegative("examples")));
  Run run(s);
  run.open();
  std::string csv = "iteration,mean_pixel_error\n";
  for (std::size_t i = 0; i < res.error.size(); ++i) csv += std::to_string(i) + ',' + format_number(res.error[i]) + '\n';
  run.text("denoise.csv", csv);
  write_grid(run, "denoise", res.examples, side);
  run.finish();
  return 0;
}

// ---------------------------------------------------------------- interpolate

int cmd_interpolate(const Settings& s) {
  const data::Dataset d = load_data(s);
  const model::Model m = load_model(s, d);
  require_kanerva(m, s);
  const int side = image_side(m);
  const Index T = s.positive("episode-length");
  if (T < 2) throw ConfigError("'episode-length' must be at least 2 to pick two endpoints");
  const auto steps = s.positive("steps");
  if (steps < 2) throw ConfigError("'steps' must be at least 2");
  Rng rng = make_rng(s.seed(), "interpolate.episode");
  const data::Episode ep = data::sample_episode(split(s, d), T, std::nullopt, rng);
  const auto mem = episodic::write_episode(m, ep.patterns, episodic::episode_seed(s.seed(), "interpolate.write", 0));
  const auto it = episodic::interpolate(m, mem, ep.patterns.row(0).transpose(), ep.patterns.row(1).transpose(),
                                        static_cast<int>(steps));
  Run run(s);
  run.open();
  std::string csv = "index,alpha,weight_norm\n";
  for (std::size_t j = 0; j < it.alphas.size(); ++j)
    csv += std::to_string(j) + ',' + format_number(it.alphas[j]) + ',' + format_number(it.weights[j].norm()) + '\n';
  run.text("interpolate.csv", csv);
  std::vector<std::vector<Vector>> grid{{ep.patterns.row(0).transpose()}};
  for (const auto& img : it.images) grid[0].push_back(img);
  grid[0].push_back(ep.patterns.row(1).transpose());
  write_grid(run, "interpolate", grid, side);
  run.finish();
  return 0;
}

// ---------------------------------------------------------------- generate

int cmd_generate(const Settings& s) {
  const data::Dataset d = load_data(s);
  const model::Model m = load_model(s, d);
  require_kanerva(m, s);
  const int side = image_side(m);
  const auto classes = s.nonnegative("classes");
  Rng rng = make_rng(s.seed(), "generate.episode");
  const data::Episode ep = data::sample_episode(
      split(s, d), s.positive("episode-length"),
      classes > 0 ? std::optional<int>(static_cast<int>(classes)) : std::nullopt, rng);
  const auto mem = episodic::write_episode(m, ep.patterns, episodic::episode_seed(s.seed(), "generate.write", 0));
  const auto samples = episodic::generate(m, mem, static_cast<int>(s.nonnegative("iterations")),
                                          static_cast<int>(s.positive("count")), s.seed());
  Run run(s);
  run.open();
  std::string csv = "sample,iteration,mean_probability\n";
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t k = 0; k < samples[i].size(); ++k)
      csv += std::to_string(i) + ',' + std::to_string(k) + ',' + format_number(samples[i][k].mean()) + '\n';
  run.text("generate.csv", csv);
  write_grid(run, "generate", samples, side);
  run.finish();
  return 0;
}

// ---------------------------------------------------------------- scaling

int cmd_scaling(const Settings& s) {
  const data::Dataset d = load_data(s);
  const model::Model m = load_model(s, d);
  std::vector<Index> Ts;
  for (auto t : s.int_list("T-list")) Ts.push_back(t);
  std::vector<int> cls;
  for (auto c : s.int_list("class-list")) cls.push_back(static_cast<int>(c));
  const auto cells = episodic::eval_episode_scaling(m, split(s, d), Ts, cls, s.positive("episodes"), s.seed());
  Run run(s);
  run.open();
  std::string csv = "T,classes,neg_elbo_per_sample,recon_per_sample\n";
  for (const auto& c : cells)
    csv += std::to_string(c.T) + ',' + std::to_string(c.classes) + ',' + format_number(c.neg_elbo_per_sample) + ',' +
           format_number(c.recon_per_sample) + '\n';
  run.text("scaling.csv", csv);
  run.finish();
  return 0;
}

// ---------------------------------------------------------------- sdm-demo

int cmd_sdm_demo(const Settings& s) {
  const int D = static_cast<int>(s.positive("dim"));
  const int K = static_cast<int>(s.positive("rows"));
  const auto tau_setting = s.integer("tau");
  const int n = static_cast<int>(s.positive("patterns"));
  const double corruption = s.real("corruption");
  const int iters = static_cast<int>(s.positive("iterations"));
  const int trials = static_cast<int>(s.positive("trials"));
  if (!(corruption >= 0 && corruption < 0.5)) throw ConfigError("'corruption' must lie in [0, 0.5)");
  if (tau_setting > D) throw ConfigError("'tau' exceeds the pattern dimension");
  const int tau = tau_setting < 0 ? sdm::tau_for_fraction(D, s.real("fraction")) : static_cast<int>(tau_setting);

  Rng rng = make_rng(s.seed(), "sdm.demo");
  sdm::SdmState state = sdm::SdmState::random(D, K, tau, rng);
  std::vector<sdm::BitPattern> stored;
  for (int i = 0; i < n; ++i) {
    stored.push_back(sdm::BitPattern::random(D, rng));
    state = sdm::write(state, stored.back());
  }
  std::vector<double> recovered(static_cast<std::size_t>(iters + 1), 0.0), distance(recovered.size(), 0.0);
  for (int t = 0; t < trials; ++t) {
    const auto& target = stored[static_cast<std::size_t>(t % n)];
    sdm::BitPattern q = target.corrupted(corruption, rng);
    for (int i = 0; i <= iters; ++i) {
      if (i > 0) q = sdm::read(state, q);
      recovered[static_cast<std::size_t>(i)] += q == target;
      distance[static_cast<std::size_t>(i)] += sdm::hamming(q, target);
    }
  }
  Run run(s);
  run.open();
  std::string csv = "iteration,recovery_rate,mean_hamming,tau\n";
  for (int i = 0; i <= iters; ++i)
    csv += std::to_string(i) + ',' + format_number(recovered[static_cast<std::size_t>(i)] / trials) + ',' +
           format_number(distance[static_cast<std::size_t>(i)] / trials) + ',' + std::to_string(tau) + '\n';
  run.text("sdm.csv", csv);
  run.finish();
  return 0;
}

}  // namespace

const std::vector<Command>& commands() {
  static const std::vector<Command> all = [] {
    std::vector<Command> c;
    c.push_back({"gen-data", "generate the toy glyph dataset",
                 with_common({{"classes", Kind::Int, "16", "glyph classes"},
                              {"train", Kind::Int, "2000", "training patterns"},
                              {"test", Kind::Int, "500", "held-out patterns"},
                              {"flip", Kind::Real, "0.12", "per-pixel flip probability"},
                              {"side", Kind::Int, "8", "glyph side in pixels"},
                              {"prototype-side", Kind::Int, "4", "prototype side before upsampling"}}),
                 cmd_gen_data});
    c.push_back({"train", "train a Kanerva machine or the matched VAE", join(dataset_specs(), train_specs()), cmd_train});
    c.push_back({"eval", "held-out lower bound per sample",
                 join(checkpoint_specs(), std::vector<OptionSpec>{{"episode-length", Kind::Int, "16", "patterns per episode"},
                                                                  {"episodes", Kind::Int, "200", "evaluation episodes"},
                                                                  {"classes", Kind::Int, "0", "classes per episode (0: any)"}}),
                 cmd_eval});
    c.push_back({"denoise", "iterative reading of occluded stored patterns",
                 join(checkpoint_specs(), std::vector<OptionSpec>{{"episode-length", Kind::Int, "16", "patterns per episode"},
                                                                  {"block-size", Kind::Int, "3", "side of the occluding block"},
                                                                  {"iterations", Kind::Int, "3", "reading iterations"},
                                                                  {"trials", Kind::Int, "100", "occluded queries"},
                                                                  {"examples", Kind::Int, "8", "trials kept as images"}}),
                 cmd_denoise});
    c.push_back({"interpolate", "interpolate between the access weights of two stored patterns",
                 join(checkpoint_specs(), std::vector<OptionSpec>{{"episode-length", Kind::Int, "16", "patterns per episode"},
                                                                  {"steps", Kind::Int, "8", "interpolation points"}}),
                 cmd_interpolate});
    c.push_back({"generate", "sample from a written memory with iterative refinement",
                 join(checkpoint_specs(), std::vector<OptionSpec>{{"episode-length", Kind::Int, "16", "patterns per episode"},
                                                                  {"classes", Kind::Int, "0", "classes in the written episode (0: any)"},
                                                                  {"iterations", Kind::Int, "8", "refinement iterations"},
                                                                  {"count", Kind::Int, "8", "samples"}}),
                 cmd_generate});
    c.push_back({"scaling", "lower bound across episode lengths and class counts",
                 join(checkpoint_specs(), std::vector<OptionSpec>{{"T-list", Kind::Text, "16,32,64,128", "episode lengths"},
                                                                  {"class-list", Kind::Text, "2,4,16", "classes per episode"},
                                                                  {"episodes", Kind::Int, "50", "episodes per cell"}}),
                 cmd_scaling});
    c.push_back({"sdm-demo", "recovery rates of a classical sparse distributed memory",
                 with_common({{"dim", Kind::Int, "256", "pattern length D"},
                              {"rows", Kind::Int, "1000", "hard locations K"},
                              {"tau", Kind::Int, "-1", "Hamming threshold (negative: from 'fraction')"},
                              {"fraction", Kind::Real, "0.1", "target selection fraction when tau is negative"},
                              {"patterns", Kind::Int, "10", "stored patterns"},
                              {"corruption", Kind::Real, "0.1", "fraction of flipped bits in each query"},
                              {"iterations", Kind::Int, "3", "reading iterations"},
                              {"trials", Kind::Int, "200", "queries"}}),
                 cmd_sdm_demo});
    return c;
  }();
  return all;
}

const Command& find_command(const std::string& name) {
  for (const auto& c : commands())
    if (c.name == name) return c;
  throw ConfigError("unknown command '" + name + "'");
}

int replay(const fs::path& manifest, const std::string& out_override) {
  json j;
  try {
    j = json::parse(io::read_text(manifest));
  } catch (const json::exception& e) {
    throw IoError(manifest.string() + ": not a valid manifest (" + e.what() + ")");
  }
  if (!j.contains("command") || !j.contains("config")) throw IoError(manifest.string() + ": manifest lacks command or config");
  const Command& cmd = find_command(j["command"].get<std::string>());
  std::map<std::string, std::string> values = j["config"].get<std::map<std::string, std::string>>();
  if (!out_override.empty()) values["out"] = out_override;
  const Settings s = resolve(cmd.name, cmd.specs, values, {});
  return cmd.run(s);
}

}  // namespace kanerva::cli
