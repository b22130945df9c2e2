#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "treereg/autodiff.hpp"

using namespace treereg;
using testutil::check_gradient;
using testutil::random_matrix;

namespace {

// Weighted sum with fixed random weights, so every output entry matters.
Var reduce(Graph& g, Var v, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sum(mul(v, g.constant(random_matrix(v.rows(), v.cols(), rng))));
}

void expect_ok(const testutil::GradReport& r) {
  CHECK_MESSAGE(r.ok, "worst relative error " << r.worst_rel << ", worst absolute " << r.worst_abs);
}

}  // namespace

TEST_CASE("matrix products against hand sums") {
  Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  Matrix b = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}});
  Matrix c = matmul(a, b);
  CHECK(c == Matrix::from_rows({{4, 5}, {10, 11}}));
  CHECK(matmul_bt(a, a) == Matrix::from_rows({{14, 32}, {32, 77}}));
  CHECK(matmul_at(a, a) == matmul(transpose(a), a));
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("elementwise ops: finite-difference gradients") {
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(3, 4, rng);
  const Matrix y = random_matrix(3, 4, rng);
  const Matrix row = random_matrix(1, 4, rng);

  SUBCASE("add / sub / mul") {
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, add(v[0], v[1])); }, {x, y}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, sub(v[0], v[1])); }, {x, y}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, mul(v[0], v[1])); }, {x, y}));
  }
  SUBCASE("add_row / scale / add_scalar") {
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, add_row(v[0], v[1])); }, {x, row}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, scale(v[0], -2.5)); }, {x}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, add_scalar(v[0], 0.7)); }, {x}));
  }
  SUBCASE("nonlinearities") {
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, sigmoid(v[0])); }, {x}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, tanh(v[0])); }, {x}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, leaky_relu(v[0])); }, {x}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, log_sigmoid(v[0])); }, {x}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, exp(v[0])); }, {x}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, abs(v[0])); }, {x}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, square(v[0])); }, {x}));
  }
  SUBCASE("log on positive inputs") {
    std::mt19937_64 r2(5);
    const Matrix pos = random_matrix(3, 4, r2, 0.2, 2.0);
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, log(v[0])); }, {pos}));
  }
  SUBCASE("reductions and reshapes") {
    expect_ok(check_gradient([](Graph&, auto& v) { return sum(v[0]); }, {x}));
    expect_ok(check_gradient([](Graph&, auto& v) { return mean(v[0]); }, {x}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, col_sum(v[0])); }, {x}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, reshape(v[0], 2, 6)); }, {x}));
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, slice_cols(v[0], 1, 2)); }, {x}));
    expect_ok(check_gradient(
        [](Graph& g, auto& v) {
          std::vector<Var> parts = {v[0], v[1]};
          return reduce(g, concat_cols(parts));
        },
        {x, y}));
  }
  SUBCASE("softmax rows") {
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, softmax_rows(v[0])); }, {x}));
  }
}

TEST_CASE("matmul ops: finite-difference gradients") {
  std::mt19937_64 rng(2);
  const Matrix a = random_matrix(3, 5, rng);
  const Matrix b = random_matrix(5, 2, rng);
  const Matrix bt = random_matrix(4, 5, rng);
  expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, matmul(v[0], v[1])); }, {a, b}));
  expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, matmul_bt(v[0], v[1])); }, {a, bt}));
}

TEST_CASE("bce_logits: value and gradient") {
  Graph g;
  Var logits = g.parameter(Matrix::from_rows({{0.3}, {-1.2}, {2.0}}));
  Var targets = g.constant(Matrix::from_rows({{1}, {0}, {1}}));
  Var mask = g.constant(Matrix::from_rows({{1}, {1}, {0}}));
  Var loss = bce_logits(logits, targets, mask, 2.0);
  // Hand value: masked rows only, divided by the normalizer.
  const double l0 = std::log1p(std::exp(-0.3));
  const double l1 = std::log1p(std::exp(-1.2));  // -log(1 - sig(-1.2))
  CHECK(loss.value()[0] == doctest::Approx((l0 + l1) / 2.0).epsilon(1e-12));

  std::mt19937_64 rng(3);
  const Matrix z = random_matrix(4, 2, rng, -3, 3);
  const Matrix t = Matrix::from_rows({{1, 0}, {0, 0}, {1, 1}, {0, 1}});
  const Matrix m = Matrix::from_rows({{1, 1}, {1, 0}, {1, 1}, {0, 1}});
  expect_ok(check_gradient(
      [&](Graph& gg, auto& v) { return bce_logits(v[0], gg.constant(t), gg.constant(m), 6.0); }, {z}));
}

TEST_CASE("bce_logits stays finite at extreme logits") {
  Graph g;
  Var logits = g.parameter(Matrix::from_rows({{800.0}, {-800.0}}));
  Var loss = bce_logits(logits, g.constant(Matrix::from_rows({{0}, {1}})),
                        g.constant(Matrix(2, 1, 1.0)), 2.0);
  g.backward(loss);
  CHECK(std::isfinite(loss.value()[0]));
  CHECK(logits.grad().all_finite());
}

TEST_CASE("sparsemax op: finite-difference gradient away from kinks") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = random_matrix(1, 5, rng, -1.5, 1.5);
    expect_ok(check_gradient([](Graph& g, auto& v) { return reduce(g, sparsemax(v[0])); }, {z}));
  }
}

TEST_CASE("shape errors carry operand shapes") {
  Graph g;
  Var a = g.constant(Matrix(2, 3));
  Var b = g.constant(Matrix(3, 2));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  try {
    add(a, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(sparsemax(g.constant(Matrix(2, 2))), ShapeError);
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  // f(x) = sum(x * x) + sum(x) -> df/dx = 2x + 1
  Graph g;
  Matrix xv = Matrix::from_rows({{1.5, -2.0}});
  Var x = g.parameter(xv);
  Var f = add(sum(mul(x, x)), sum(x));
  g.backward(f);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(-3.0));
}
