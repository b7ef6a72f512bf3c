#include <doctest.h>

#include <filesystem>

#include "gradcheck.hpp"
#include "kanerva/errors.hpp"
#include "kanerva/model.hpp"
#include "support.hpp"

using namespace kanerva;
using namespace kanerva::model;
using kanerva::testing::check_elbo_gradient;
using kanerva::testing::max_abs;
using kanerva::testing::tiny_config;

namespace {

Matrix binary_patterns(Index T, Index D, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  Matrix X(T, D);
  for (Index i = 0; i < X.size(); ++i) X.data()[i] = coin(rng) ? 1.0 : 0.0;
  return X;
}

}  // namespace

TEST_CASE("init_model shapes and projections") {
  const Model m = init_model(ModelConfig{}, 1);
  CHECK(m.params.at("memory.addresses").rows() == 32);
  CHECK(m.params.at("memory.addresses").cols() == 16);
  for (Index k = 0; k < 32; ++k) CHECK(m.params.at("memory.addresses").row(k).norm() == doctest::Approx(1.0));
  CHECK(m.params.at("memory.R0") == Matrix::Zero(32, 16));
  CHECK(prior_memory(m).U == Matrix::Identity(32, 32));
  CHECK(m.params.at("enc_y.w0").rows() == 64);
  CHECK(m.params.at("enc_y.b2").cols() == 2 * m.config.y_dim);
  CHECK(m.params.at("post_z.w0").rows() == 64 + 16);

  ModelConfig vc;
  vc.kind = ModelKind::Vae;
  const Model v = init_model(vc, 1);
  CHECK_FALSE(v.params.contains("enc_y.w0"));
  CHECK_FALSE(v.params.contains("memory.addresses"));
  CHECK(v.params.contains("enc_z.w0"));

  CHECK(init_model(ModelConfig{}, 7).params.at("dec.w0") == init_model(ModelConfig{}, 7).params.at("dec.w0"));
  CHECK(init_model(ModelConfig{}, 7).params.at("dec.w0") != init_model(ModelConfig{}, 8).params.at("dec.w0"));
}

TEST_CASE("encode_y determinism and input noise") {
  const Model m = init_model(ModelConfig{}, 2);
  Rng rng(2);
  const Vector x = binary_patterns(1, 64, rng).transpose();
  const DiagGaussian a = encode_y(m, x, Mode::Eval, 1), b = encode_y(m, x, Mode::Eval, 2);
  CHECK(a.mean == b.mean);
  CHECK(a.log_variance == b.log_variance);

  const DiagGaussian t1 = encode_y(m, x, Mode::Train, 1), t2 = encode_y(m, x, Mode::Train, 2);
  CHECK(t1.mean != t2.mean);
  CHECK(encode_y(m, x, Mode::Train, 1).mean == t1.mean);

  // Halving the noise scale should roughly halve the perturbation of the mean.
  ModelConfig half = m.config;
  half.address_input_noise = 0.1;
  Model mh = m;
  mh.config = half;
  double full_diff = 0, half_diff = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    full_diff += (encode_y(m, x, Mode::Train, s).mean - a.mean).norm();
    half_diff += (encode_y(mh, x, Mode::Train, s).mean - a.mean).norm();
  }
  CHECK(half_diff / full_diff == doctest::Approx(0.5).epsilon(0.15));
  CHECK_THROWS_AS(encode_y(m, Vector::Zero(3), Mode::Eval, 0), DimensionMismatch);
}

TEST_CASE("zeroed output layers") {
  Model m = init_model(ModelConfig{}, 3);
  zero_output_layer(m, "enc_y");
  zero_output_layer(m, "dec");
  Rng rng(3);
  const DiagGaussian q = encode_y(m, binary_patterns(1, 64, rng).transpose(), Mode::Eval, 0);
  CHECK(max_abs(q.mean) == 0);
  CHECK(max_abs(q.log_variance) == 0);
  const Vector logits = decode(m, Vector::Random(16));
  CHECK(max_abs(logits) == 0);
  CHECK((1.0 / (1.0 + (-logits.array()).exp())).isApproxToConstant(0.5));
}

TEST_CASE("posterior_z is a pure function of its inputs") {
  const Model m = init_model(ModelConfig{}, 4);
  const DiagGaussian a = posterior_z(m, Vector::Zero(64), Vector::Zero(16));
  const DiagGaussian b = posterior_z(m, Vector::Zero(64), Vector::Zero(16));
  CHECK(a.mean == b.mean);
  CHECK_THROWS_AS(posterior_z(m, Vector::Zero(64), Vector::Zero(3)), DimensionMismatch);
}

TEST_CASE("key_fn matches central differences through the tape") {
  const Model m = init_model(ModelConfig{}, 5);
  Rng rng(5);
  const Vector y = kanerva::testing::random_matrix(m.config.y_dim, 1, rng);
  const Vector dir = kanerva::testing::random_matrix(m.config.key_dim, 1, rng);  // projection of the key
  ad::Tape t;
  const GraphParams p = bind_params(t, m.params, false);
  const ad::Var yv = t.variable(y.transpose());
  // Rebuild key_fn on the tape: two layers with a ReLU in between.
  ad::Var h = ad::relu(ad::add_row(ad::matmul(yv, p["key.w0"]), p["key.b0"]));
  ad::Var k = ad::add_row(ad::matmul(h, p["key.w1"]), p["key.b1"]);
  CHECK(max_abs(k.value().transpose() - key_fn(m, y)) < 1e-14);
  t.backward(ad::sum(ad::hadamard(k, t.constant(dir.transpose()))));
  const double step = 1e-5;
  for (Index i = 0; i < y.size(); ++i) {
    Vector up = y, down = y;
    up(i) += step;
    down(i) -= step;
    const double numeric = (key_fn(m, up).dot(dir) - key_fn(m, down).dot(dir)) / (2 * step);
    const double analytic = yv.grad()(0, i);
    CHECK(std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6}) < 1e-4);
  }
}

TEST_CASE("kl_diag examples") {
  const DiagGaussian p{Vector::Constant(1, 0.0), Vector::Constant(1, 0.0)};
  const DiagGaussian q{Vector::Constant(1, 1.0), Vector::Constant(1, 0.0)};
  CHECK(kl_diag(q, p) == doctest::Approx(0.5));
  CHECK(kl_diag(p, p) == 0.0);
  CHECK_THROWS_AS(kl_diag(q, DiagGaussian::standard(2)), DimensionMismatch);
}

TEST_CASE("kl_diag matches a Monte-Carlo estimate") {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n = 3;
    const DiagGaussian q{kanerva::testing::random_matrix(n, 1, rng), 0.5 * kanerva::testing::random_matrix(n, 1, rng)};
    const DiagGaussian p{kanerva::testing::random_matrix(n, 1, rng), 0.5 * kanerva::testing::random_matrix(n, 1, rng)};
    const int draws = 100000;
    auto log_density = [](const DiagGaussian& g, const Vector& x) {
      return (-0.5 * (std::log(2 * M_PI) + g.log_variance.array() +
                      (x - g.mean).array().square() * (-g.log_variance.array()).exp()))
          .sum();
    };
    double s = 0, s2 = 0;
    for (int i = 0; i < draws; ++i) {
      const Vector x = q.sample(rng);
      const double v = log_density(q, x) - log_density(p, x);
      s += v;
      s2 += v * v;
    }
    const double mean = s / draws, se = std::sqrt((s2 / draws - mean * mean) / draws);
    CHECK(kl_diag(q, p) >= 0);
    CHECK(std::abs(kl_diag(q, p) - mean) < 3 * se);
  }
}

TEST_CASE("reparameterised samples have the right moments") {
  Rng rng(7);
  const DiagGaussian g{(Vector(2) << 1.5, -2.0).finished(), (Vector(2) << 0.3, -1.0).finished()};
  const int n = 100000;
  Vector s = Vector::Zero(2), s2 = Vector::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Vector x = g.sample(rng);
    s += x;
    s2 += x.cwiseAbs2();
  }
  const Vector mean = s / n;
  const Vector var = s2 / n - mean.cwiseAbs2();
  for (Index d = 0; d < 2; ++d) {
    const double v = g.variance()(d);
    CHECK(std::abs(mean(d) - g.mean(d)) < 3 * std::sqrt(v / n));
    CHECK(std::abs(var(d) - v) < 3 * v * std::sqrt(2.0 / n));
  }
}

TEST_CASE("elbo breakdown identities") {
  Rng rng(8);
  const ModelConfig c = tiny_config();
  Model m = init_model(c, 8);
  const Matrix X = binary_patterns(4, c.input_dim, rng);
  const EpisodeNoise noise = draw_noise(c, 4, 8);
  const ElboBreakdown b = episode_elbo(m, X, noise, Mode::Train);
  CHECK(b.total == b.recon - b.kl_y - b.kl_z);
  CHECK(b.kl_y >= 0);
  CHECK(b.kl_z >= 0);

  zero_output_layer(m, "dec");
  const ElboBreakdown u = episode_elbo(m, X, noise, Mode::Train);
  CHECK(u.recon == doctest::Approx(-4.0 * c.input_dim * std::log(2.0)));

  // posterior_z equal to the mean-field read prior: zero mean is impossible to
  // force in general, so check with R = 0 and a zeroed posterior network.
  Model z = init_model(c, 9);
  zero_output_layer(z, "post_z");
  memory::MemoryState zero_mem = prior_memory(z);
  CHECK(elbo_episode(z, X, zero_mem, noise, Mode::Train).kl_z == 0.0);
}

TEST_CASE("write_episode agrees with the tape used for training") {
  Rng rng(9);
  ModelConfig c = tiny_config();
  for (auto mode : {memory::ReadMode::MeanField, memory::ReadMode::Distributional}) {
    for (auto cov : {memory::CovarianceStructure::Full, memory::CovarianceStructure::Diagonal}) {
      c.read_mode = mode;
      c.covariance = cov;
      const Model m = init_model(c, 10);
      const Matrix X = binary_patterns(5, c.input_dim, rng);
      const EpisodeNoise noise = draw_noise(c, 5, 11);
      const memory::MemoryState post = write_episode(m, prior_memory(m), X, noise, Mode::Train);
      const ElboBreakdown direct = episode_elbo(m, X, noise, Mode::Train);
      const ElboBreakdown split = elbo_episode(m, X, post, noise, Mode::Train);
      CHECK(direct.total == doctest::Approx(split.total).epsilon(1e-10));
    }
  }
}

TEST_CASE("elbo gradients match central differences") {
  Rng rng(10);
  ModelConfig c = tiny_config();
  SUBCASE("mean-field") {}
  SUBCASE("distributional") { c.read_mode = memory::ReadMode::Distributional; }
  SUBCASE("diagonal") { c.covariance = memory::CovarianceStructure::Diagonal; }
  SUBCASE("stop-gradient") { c.unroll_writes = false; }
  SUBCASE("vae") { c.kind = ModelKind::Vae; }
  SUBCASE("gaussian likelihood") { c.likelihood = Likelihood::Gaussian; }
  SUBCASE("two samples") { c.posterior_samples = 2; }
  Model m = init_model(c, 12);
  // Move off the symmetric initial point so every block is exercised.
  Rng prng(13);
  for (auto& b : m.params.blocks()) b.value += 0.1 * kanerva::testing::random_matrix(b.value.rows(), b.value.cols(), prng);
  project_parameters(m);
  const Matrix X = binary_patterns(3, c.input_dim, rng);
  const auto r = check_elbo_gradient(m, X, draw_noise(c, 3, 14));
  INFO("worst block: " << r.worst_block << " error " << r.max_rel_error);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("stop-gradient mode cuts the prior out of the gradient") {
  ModelConfig c = tiny_config();
  c.unroll_writes = false;
  Rng rng(15);
  const Model m = init_model(c, 15);
  const auto g = elbo_and_grad(m, {binary_patterns(3, c.input_dim, rng)}, {draw_noise(c, 3, 15)}, Mode::Train);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const auto& name = m.params.blocks()[i].name;
    if (name == "memory.R0" || name == "memory.U0_factor" || name.starts_with("enc_z"))
      CHECK(max_abs(g.grad.blocks[i]) == 0);
  }
}

TEST_CASE("Adam minimises a quadratic") {
  ModelConfig c = tiny_config();
  c.kind = ModelKind::Vae;
  Model m;
  m.config = c;
  m.params.add("x", Matrix::Constant(1, 1, 3.0));
  AdamState adam;
  for (int step = 0; step < 2000; ++step) {
    const double x = m.params.at("x")(0, 0);
    grad_step(m, Gradient{{Matrix::Constant(1, 1, 2 * (x - 1.25))}}, 0.01, adam);
  }
  CHECK(std::abs(m.params.at("x")(0, 0) - 1.25) < 1e-4);
}

TEST_CASE("grad_step keeps the projections") {
  Model m = init_model(tiny_config(), 16);
  AdamState adam;
  Rng rng(16);
  for (int step = 0; step < 5; ++step) {
    Gradient g;
    for (const auto& b : m.params.blocks()) g.blocks.push_back(kanerva::testing::random_matrix(b.value.rows(), b.value.cols(), rng));
    grad_step(m, g, 0.05, adam);
    const Matrix& a = m.params.at("memory.addresses");
    for (Index k = 0; k < a.rows(); ++k) CHECK(a.row(k).norm() == doctest::Approx(1.0).epsilon(1e-6));
    const Matrix& f = m.params.at("memory.U0_factor");
    CHECK(max_abs(Matrix(f.triangularView<Eigen::StrictlyUpper>())) == 0);
    CHECK(f.diagonal().minCoeff() >= 0);
  }

  Model before = init_model(tiny_config(), 17);
  Model after = before;
  Gradient zero;
  for (const auto& b : after.params.blocks()) zero.blocks.push_back(Matrix::Zero(b.value.rows(), b.value.cols()));
  AdamState fresh;
  grad_step(after, zero, 0.1, fresh);
  for (std::size_t i = 0; i < before.params.size(); ++i)
    CHECK(max_abs(after.params.blocks()[i].value - before.params.blocks()[i].value) < 1e-15);

  Gradient bad = zero;
  bad.blocks[0](0, 0) = std::nan("");
  CHECK_THROWS_AS(grad_step(after, bad, 0.1, fresh), NonFinite);
}

TEST_CASE("checkpoints round-trip") {
  ModelConfig c = tiny_config();
  c.read_mode = memory::ReadMode::Distributional;
  c.covariance = memory::CovarianceStructure::Diagonal;
  c.likelihood = Likelihood::Gaussian;
  const Model m = init_model(c, 18);
  const auto path = std::filesystem::temp_directory_path() / "kanerva_test_model.kpar";
  save_checkpoint(path, m);
  const Model back = load_checkpoint(path);
  CHECK(back.config.read_mode == c.read_mode);
  CHECK(back.config.covariance == c.covariance);
  CHECK(back.config.likelihood == c.likelihood);
  CHECK(back.config.memory_rows == c.memory_rows);
  REQUIRE(back.params.size() == m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    CHECK(back.params.blocks()[i].name == m.params.blocks()[i].name);
    CHECK(back.params.blocks()[i].value == m.params.blocks()[i].value);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}
