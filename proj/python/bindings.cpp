#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "kanerva/data.hpp"
#include "kanerva/episodic.hpp"
#include "kanerva/errors.hpp"
#include "kanerva/linalg.hpp"
#include "kanerva/memory.hpp"
#include "kanerva/model.hpp"
#include "kanerva/sdm.hpp"

namespace py = pybind11;
using namespace kanerva;

namespace {

sdm::BitPattern to_pattern(const std::vector<std::int8_t>& bits) { return sdm::BitPattern(bits); }

std::vector<std::int8_t> from_pattern(const sdm::BitPattern& p) { return {p.bits().begin(), p.bits().end()}; }

py::dict patterns_dict(const data::LabelledPatterns& p) {
  py::dict d;
  d["patterns"] = p.patterns;
  d["labels"] = p.labels;
  return d;
}

data::LabelledPatterns labelled(const Matrix& patterns, std::vector<int> labels) {
  if (labels.empty()) labels.assign(static_cast<std::size_t>(patterns.rows()), 0);
  return {patterns, std::move(labels)};
}

}  // namespace

PYBIND11_MODULE(_kanerva, m) {
  m.doc() = "Kanerva Machine memory, model and classical SDM";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  auto config_error = py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<NumericError>(m, "NumericError", error.ptr());
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", error.ptr());
  py::register_exception<IoError>(m, "IoError", error.ptr());
  py::register_exception<CheckpointMismatch>(m, "CheckpointMismatch", config_error.ptr());

  // linalg
  m.def("solve_psd", &solve_psd, py::arg("s"), py::arg("b"));
  m.def("cholesky", &cholesky, py::arg("s"), py::arg("jitter") = 0.0);
  m.def("kron", &kron);
  m.def("min_eigenvalue", &min_eigenvalue);
  m.def(
      "gaussian_condition",
      [](const Vector& mean, const Matrix& cov, const std::vector<Index>& observed, const Vector& values) {
        const JointGaussian post = gaussian_condition(JointGaussian{mean, cov}, observed, values);
        return py::make_tuple(post.mean, post.cov);
      },
      py::arg("mean"), py::arg("cov"), py::arg("observed"), py::arg("values"),
      "Conditions a joint Gaussian on observed coordinates; returns (mean, cov) of the rest.");

  // memory
  py::enum_<memory::ReadMode>(m, "ReadMode")
      .value("MEAN_FIELD", memory::ReadMode::MeanField)
      .value("DISTRIBUTIONAL", memory::ReadMode::Distributional);
  py::enum_<memory::CovarianceStructure>(m, "Covariance")
      .value("FULL", memory::CovarianceStructure::Full)
      .value("DIAGONAL", memory::CovarianceStructure::Diagonal);

  py::class_<memory::MemoryState>(m, "MemoryState")
      .def(py::init([](const Matrix& R, const Matrix& U, double sigma2) {
             memory::MemoryState s{R, U, sigma2};
             memory::validate(s);
             return s;
           }),
           py::arg("R"), py::arg("U"), py::arg("sigma2") = memory::kDefaultSigma2)
      .def_readwrite("R", &memory::MemoryState::R)
      .def_readwrite("U", &memory::MemoryState::U)
      .def_readwrite("sigma2", &memory::MemoryState::sigma2)
      .def_property_readonly("K", &memory::MemoryState::K)
      .def_property_readonly("C", &memory::MemoryState::C);

  m.def("init_memory", &memory::init_memory, py::arg("K"), py::arg("C"), py::arg("R0"), py::arg("u0_factor"),
        py::arg("sigma2") = memory::kDefaultSigma2);
  m.def("compute_weights", py::overload_cast<const Vector&, const Matrix&>(&memory::compute_weights),
        py::arg("key"), py::arg("addresses"));
  m.def(
      "read_prior",
      [](const Vector& w, const memory::MemoryState& s, memory::ReadMode mode) {
        const DiagGaussian g = memory::read_prior(w, s, mode);
        return py::make_tuple(g.mean, g.variance());
      },
      py::arg("w"), py::arg("state"), py::arg("mode") = memory::ReadMode::MeanField, "Returns (mean, variance).");
  m.def("write_batch", &memory::write_batch, py::arg("state"), py::arg("W"), py::arg("Z"),
        py::arg("structure") = memory::CovarianceStructure::Full);
  m.def(
      "write_online",
      [](const memory::MemoryState& s, const Vector& w, const Vector& z, memory::CovarianceStructure c) {
        return memory::write_online(s, w, z, c);
      },
      py::arg("state"), py::arg("w"), py::arg("z"), py::arg("structure") = memory::CovarianceStructure::Full);
  m.def("write_distributional", &memory::write_distributional, py::arg("state"), py::arg("W"), py::arg("mu_q"),
        py::arg("sigma_q"), py::arg("structure") = memory::CovarianceStructure::Full);
  m.def("sample_memory", &memory::sample_memory, py::arg("state"), py::arg("seed"));
  m.def("save_snapshot", &memory::save_snapshot, py::arg("path"), py::arg("state"));
  m.def("load_snapshot", &memory::load_snapshot, py::arg("path"), py::arg("sigma2") = memory::kDefaultSigma2);

  // classical SDM
  py::class_<sdm::SdmState>(m, "SdmState")
      .def_static(
          "random",
          [](int dim, int rows, int tau, std::uint64_t seed) {
            Rng rng(seed);
            return sdm::SdmState::random(dim, rows, tau, rng);
          },
          py::arg("dim"), py::arg("rows"), py::arg("tau"), py::arg("seed"))
      .def_property_readonly("dim", &sdm::SdmState::dim)
      .def_property_readonly("rows", &sdm::SdmState::rows)
      .def_property_readonly("tau", &sdm::SdmState::tau)
      .def_property_readonly("counters",
                             [](const sdm::SdmState& s) {
                               return std::vector<std::int32_t>(s.counters().begin(), s.counters().end());
                             })
      .def("__eq__", [](const sdm::SdmState& a, const sdm::SdmState& b) { return a == b; });
  m.def("hamming", [](const std::vector<std::int8_t>& a, const std::vector<std::int8_t>& b) {
    return sdm::hamming(to_pattern(a), to_pattern(b));
  });
  m.def(
      "sdm_select",
      [](const sdm::SdmState& s, const std::vector<std::int8_t>& x) { return sdm::select(s, to_pattern(x)); },
      py::arg("state"), py::arg("x"));
  m.def(
      "sdm_write", [](const sdm::SdmState& s, const std::vector<std::int8_t>& x) { return sdm::write(s, to_pattern(x)); },
      py::arg("state"), py::arg("x"));
  m.def(
      "sdm_read",
      [](const sdm::SdmState& s, const std::vector<std::int8_t>& x) { return from_pattern(sdm::read(s, to_pattern(x))); },
      py::arg("state"), py::arg("x"));
  m.def(
      "sdm_iterative_read",
      [](const sdm::SdmState& s, const std::vector<std::int8_t>& x, int iterations) {
        return from_pattern(sdm::iterative_read(s, to_pattern(x), iterations));
      },
      py::arg("state"), py::arg("x"), py::arg("iterations"));
  m.def("tau_for_fraction", &sdm::tau_for_fraction, py::arg("dim"), py::arg("fraction") = 0.1);
  m.def("selection_probability", &sdm::selection_probability, py::arg("dim"), py::arg("tau"));

  // data
  m.def(
      "make_glyphs",
      [](int side, int prototype_side, int classes, Index train, Index test, double flip, std::uint64_t seed) {
        const data::Dataset d = data::make_glyphs({side, prototype_side, classes, train, test, flip}, seed);
        py::dict out;
        out["train"] = patterns_dict(d.train);
        out["test"] = patterns_dict(d.test);
        return out;
      },
      py::arg("side") = 8, py::arg("prototype_side") = 4, py::arg("classes") = 16, py::arg("train") = 2000,
      py::arg("test") = 500, py::arg("flip") = 0.12, py::arg("seed") = 1);

  // model
  py::enum_<model::ModelKind>(m, "ModelKind")
      .value("KANERVA", model::ModelKind::Kanerva)
      .value("VAE", model::ModelKind::Vae);
  py::enum_<model::Likelihood>(m, "Likelihood")
      .value("BERNOULLI", model::Likelihood::Bernoulli)
      .value("GAUSSIAN", model::Likelihood::Gaussian);

  py::class_<model::ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("kind", &model::ModelConfig::kind)
      .def_readwrite("input_dim", &model::ModelConfig::input_dim)
      .def_readwrite("y_dim", &model::ModelConfig::y_dim)
      .def_readwrite("code_dim", &model::ModelConfig::code_dim)
      .def_readwrite("key_dim", &model::ModelConfig::key_dim)
      .def_readwrite("memory_rows", &model::ModelConfig::memory_rows)
      .def_readwrite("hidden", &model::ModelConfig::hidden)
      .def_readwrite("hidden_layers", &model::ModelConfig::hidden_layers)
      .def_readwrite("key_hidden", &model::ModelConfig::key_hidden)
      .def_readwrite("read_mode", &model::ModelConfig::read_mode)
      .def_readwrite("covariance", &model::ModelConfig::covariance)
      .def_readwrite("unroll_writes", &model::ModelConfig::unroll_writes)
      .def_readwrite("address_input_noise", &model::ModelConfig::address_input_noise)
      .def_readwrite("likelihood", &model::ModelConfig::likelihood)
      .def_readwrite("posterior_samples", &model::ModelConfig::posterior_samples);

  py::class_<model::Model>(m, "Model")
      .def_readonly("config", &model::Model::config)
      .def("param_names",
           [](const model::Model& mo) {
             std::vector<std::string> names;
             for (const auto& b : mo.params.blocks()) names.push_back(b.name);
             return names;
           })
      .def("param", [](const model::Model& mo, const std::string& name) { return mo.params.at(name); })
      .def("prior_memory", &model::prior_memory)
      .def("decode", &model::decode, py::arg("z"))
      .def("weights_for", &model::weights_for, py::arg("y"));
  m.def("init_model", &model::init_model, py::arg("config"), py::arg("seed"));
  m.def("save_checkpoint", &model::save_checkpoint, py::arg("path"), py::arg("model"));
  m.def("load_checkpoint", &model::load_checkpoint, py::arg("path"));

  // episodic
  py::class_<episodic::TrainConfig>(m, "TrainConfig")
      .def(py::init(&episodic::TrainConfig::desk))
      .def_static("desk", &episodic::TrainConfig::desk)
      .def_static("paper_omniglot", &episodic::TrainConfig::paper_omniglot)
      .def_readwrite("model", &episodic::TrainConfig::model)
      .def_readwrite("episode_length", &episodic::TrainConfig::episode_length)
      .def_readwrite("batch", &episodic::TrainConfig::batch)
      .def_readwrite("lr", &episodic::TrainConfig::lr)
      .def_readwrite("steps", &episodic::TrainConfig::steps)
      .def_readwrite("seed", &episodic::TrainConfig::seed)
      .def_readwrite("kl_y_warmup", &episodic::TrainConfig::kl_y_warmup);

  py::class_<episodic::MetricsRow>(m, "MetricsRow")
      .def_readonly("step", &episodic::MetricsRow::step)
      .def_readonly("neg_elbo_per_sample", &episodic::MetricsRow::neg_elbo_per_sample)
      .def_readonly("recon", &episodic::MetricsRow::recon)
      .def_readonly("kl_y", &episodic::MetricsRow::kl_y)
      .def_readonly("kl_z", &episodic::MetricsRow::kl_z);

  m.def(
      "train",
      [](const episodic::TrainConfig& config, const Matrix& patterns, std::vector<int> labels) {
        auto r = episodic::train(config, labelled(patterns, std::move(labels)));
        return py::make_tuple(std::move(r.model), r.metrics, r.abort_reason);
      },
      py::arg("config"), py::arg("patterns"), py::arg("labels") = std::vector<int>{},
      "Returns (model, metrics, abort_reason).");
  m.def(
      "evaluate",
      [](const model::Model& mo, const Matrix& patterns, std::vector<int> labels, Index T, Index episodes,
         std::optional<int> classes, std::uint64_t seed) {
        return episodic::evaluate(mo, labelled(patterns, std::move(labels)), T, episodes, classes, seed);
      },
      py::arg("model"), py::arg("patterns"), py::arg("labels") = std::vector<int>{}, py::arg("T") = 16,
      py::arg("episodes") = 50, py::arg("classes") = std::nullopt, py::arg("seed") = 1);
  m.def("write_episode", py::overload_cast<const model::Model&, const Matrix&, std::uint64_t>(&episodic::write_episode),
        py::arg("model"), py::arg("X"), py::arg("seed"));
  m.def(
      "iterative_read",
      [](const model::Model& mo, const memory::MemoryState& mem, const Vector& x, int iterations, std::uint64_t seed) {
        std::vector<Vector> out;
        for (const auto& s : episodic::iterative_read_gen(mo, mem, x, iterations, seed)) out.push_back(s.probabilities);
        return out;
      },
      py::arg("model"), py::arg("memory"), py::arg("x"), py::arg("iterations"), py::arg("seed"),
      "Decoder probabilities after each reading iteration.");
  m.def(
      "denoise",
      [](const model::Model& mo, const Matrix& patterns, Index T, int block_size, int iterations, int trials, int side,
         std::uint64_t seed) {
        return episodic::denoise(mo, labelled(patterns, {}), T, block_size, iterations, trials, side, seed, 0).error;
      },
      py::arg("model"), py::arg("patterns"), py::arg("T") = 16, py::arg("block_size") = 3, py::arg("iterations") = 3,
      py::arg("trials") = 100, py::arg("side") = 8, py::arg("seed") = 1,
      "Mean pixel error of the occluded input followed by each iteration.");
}
