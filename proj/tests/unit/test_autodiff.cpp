#include <doctest.h>

#include <functional>

#include "kanerva/autodiff.hpp"
#include "kanerva/errors.hpp"
#include "support.hpp"

using namespace kanerva;
using namespace kanerva::ad;
using kanerva::testing::random_matrix;

namespace {

using Graph = std::function<Var(Tape&, const std::vector<Var>&)>;

double evaluate(const Graph& f, const std::vector<Matrix>& inputs) {
  Tape t;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(t.constant(m));
  return f(t, vars).scalar();
}

// Largest relative error between tape gradients and central differences.
double gradient_error(const Graph& f, std::vector<Matrix> inputs, double h = 1e-6) {
  Tape t;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(t.variable(m));
  t.backward(f(t, vars));
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Matrix analytic = vars[i].grad();
    for (Index j = 0; j < inputs[i].size(); ++j) {
      const double x0 = inputs[i].data()[j];
      inputs[i].data()[j] = x0 + h;
      const double up = evaluate(f, inputs);
      inputs[i].data()[j] = x0 - h;
      const double down = evaluate(f, inputs);
      inputs[i].data()[j] = x0;
      const double numeric = (up - down) / (2 * h);
      const double err = std::abs(numeric - analytic.data()[j]) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Projects a matrix node onto a fixed random direction to get a scalar.
Var project(Tape& t, Var a, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(hadamard(a, t.constant(random_matrix(a.rows(), a.cols(), rng))));
}

}  // namespace

TEST_CASE("constants carry no gradient and untouched grads are zero") {
  Tape t;
  const Var c = t.constant(Matrix::Ones(2, 2));
  const Var v = t.variable(Matrix::Ones(2, 2));
  const Var unused = t.variable(Matrix::Ones(3, 1));
  CHECK_FALSE(c.needs_grad());
  CHECK(v.needs_grad());
  t.backward(sum(hadamard(c, v)));
  CHECK(v.grad() == Matrix::Ones(2, 2));
  CHECK(unused.grad() == Matrix::Zero(3, 1));
}

TEST_CASE("backward needs a scalar root") {
  Tape t;
  const Var v = t.variable(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(v), DimensionMismatch);
}

TEST_CASE("shape errors") {
  Tape t;
  const Var a = t.variable(Matrix::Ones(2, 3)), b = t.variable(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(matmul(a, b), DimensionMismatch);
  CHECK_THROWS_AS(add(a, transpose(b)), DimensionMismatch);
}

TEST_CASE("forward values") {
  Tape t;
  Matrix a(2, 2);
  a << 1, -2, 3, 4;
  const Var x = t.constant(a);
  CHECK(relu(x).value() == (Matrix(2, 2) << 1, 0, 3, 4).finished());
  CHECK(sum(x).scalar() == 6);
  CHECK(row_sum(x).value() == (Matrix(2, 1) << -1, 7).finished());
  CHECK(symmetrize(x).value() == (Matrix(2, 2) << 1, 0.5, 0.5, 4).finished());
  CHECK(diag_part(x).value() == (Matrix(2, 2) << 1, 0, 0, 4).finished());
  CHECK(repeat_cols(cols(x, 1, 1), 3).value() == (Matrix(2, 3) << -2, -2, -2, 4, 4, 4).finished());
  CHECK(concat_cols(x, x).cols() == 4);
  CHECK(add_row(x, t.constant(Matrix::Ones(1, 2))).value() == (a.array() + 1).matrix());
  CHECK(div_scalar(x, t.constant(Matrix::Constant(1, 1, 2))).value() == a / 2);
}

TEST_CASE("gradients of every operator match central differences") {
  Rng rng(1);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng), c = random_matrix(3, 4, rng);
  const Matrix sq = random_matrix(3, 3, rng), row = random_matrix(1, 4, rng), col = random_matrix(3, 1, rng);
  const Matrix pos = (random_matrix(3, 4, rng).array().abs() + 0.5).matrix();
  const Matrix s = Matrix::Constant(1, 1, 1.7);
  const double tol = 1e-6;

  SUBCASE("linear") {
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, matmul(v[0], v[1])); }, {a, b}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, transpose(v[0])); }, {a}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, add(v[0], v[1])); }, {a, c}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, sub(v[0], v[1])); }, {a, c}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, hadamard(v[0], v[1])); }, {a, c}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, scale(v[0], -2.5)); }, {a}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, add_const(v[0], 3.0)); }, {a}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, add_row(v[0], v[1])); }, {a, row}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, div_scalar(v[0], v[1])); }, {a, s}) < tol);
  }
  SUBCASE("elementwise") {
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, relu(v[0])); }, {a}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, exp(v[0])); }, {a}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, log(v[0])); }, {pos}) < tol);
  }
  SUBCASE("shape") {
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, row_sum(v[0])); }, {a}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, rows(v[0], 1, 2)); }, {a}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, cols(v[0], 1, 2)); }, {a}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, concat_cols(v[0], v[1])); }, {a, col}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, repeat_cols(v[0], 5)); }, {col}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, symmetrize(v[0])); }, {sq}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, diag_part(v[0])); }, {sq}) < tol);
  }
  SUBCASE("fused terms") {
    const Matrix x = (random_matrix(3, 4, rng).array() > 0).cast<double>().matrix();
    CHECK(gradient_error([x](Tape&, const auto& v) { return bernoulli_loglik(v[0], x); }, {a}) < tol);
    CHECK(gradient_error([x](Tape&, const auto& v) { return gaussian_loglik(v[0], v[1], x); }, {a, c}) < tol);
    CHECK(gradient_error([](Tape&, const auto& v) { return kl_diag(v[0], v[1], v[2], v[3]); }, {a, c, pos, a.transpose().reshaped(3, 4)}) < tol);
  }
  SUBCASE("reuse accumulates") {
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, matmul(v[0], transpose(v[0]))); }, {a}) < tol);
    CHECK(gradient_error([](Tape& t, const auto& v) { return project(t, hadamard(exp(v[0]), v[0])); }, {a}) < tol);
  }
}

TEST_CASE("stop_gradient blocks the backward pass") {
  Tape t;
  const Var x = t.variable(Matrix::Constant(2, 2, 3.0));
  t.backward(sum(add(stop_gradient(hadamard(x, x)), x)));
  CHECK(x.grad() == Matrix::Ones(2, 2));
}

TEST_CASE("fused terms match closed forms") {
  Tape t;
  // softplus(0) = log 2, so each entry contributes x·0 − log 2.
  CHECK(bernoulli_loglik(t.constant(Matrix::Zero(2, 3)), Matrix::Ones(2, 3)).scalar() == doctest::Approx(-6 * std::log(2.0)));
  CHECK(gaussian_loglik(t.constant(Matrix::Zero(1, 1)), t.constant(Matrix::Zero(1, 1)), Matrix::Zero(1, 1)).scalar() ==
        doctest::Approx(-0.5 * std::log(2 * M_PI)));
  const Var z = t.constant(Matrix::Zero(2, 2));
  CHECK(kl_diag(z, z, z, z).scalar() == 0.0);
  // KL(N(1, 1) || N(0, e²)) = ½ (2/e² − 1 + 2) per entry.
  const double expected = 0.5 * (2 * std::exp(-2.0) + 1.0);
  CHECK(kl_diag(t.constant(Matrix::Ones(1, 1)), t.constant(Matrix::Zero(1, 1)), t.constant(Matrix::Zero(1, 1)),
                t.constant(Matrix::Constant(1, 1, 2.0)))
            .scalar() == doctest::Approx(expected));
  // Large logits must not overflow.
  CHECK(std::isfinite(bernoulli_loglik(t.constant(Matrix::Constant(1, 1, 800.0)), Matrix::Zero(1, 1)).scalar()));
}
