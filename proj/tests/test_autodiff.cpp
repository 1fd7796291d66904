#include "healthpredictor/autodiff.hpp"

#include <cmath>

#include "support.hpp"

using namespace hp;
using ad::Var;

namespace {

// Weighted sum with fixed random weights, so every output entry matters.
Var probe(const Var& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::cwise_mul(y, ad::constant(test::random_matrix(rng, y.rows(), y.cols()))));
}

Eigen::MatrixXd away_from_zero(Eigen::MatrixXd m) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (std::abs(m(i)) < 0.1) m(i) += m(i) < 0 ? -0.2 : 0.2;
  return m;
}

}  // namespace

TEST_CASE("sum of squares has gradient 2x") {
  const Eigen::Vector2d x(1.0, 2.0);
  Var v = ad::variable(x);
  ad::backward(ad::squared_norm(v));
  CHECK((v.grad() - Eigen::Vector2d(2.0, 4.0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(ad::grad_check([](const Var& a) { return ad::squared_norm(a); }, x) < 1e-6);
}

TEST_CASE("constant functions have zero gradient") {
  const Eigen::Vector3d x(0.5, -1.0, 2.0);
  Var v = ad::variable(x);
  ad::backward(ad::sum(ad::constant(Eigen::Vector3d(1, 2, 3))) + 0.0 * ad::sum(v));
  CHECK(v.grad().isZero(0.0));
  CHECK(ad::grad_check([](const Var& a) { return 0.0 * ad::sum(a) + ad::scalar_constant(3.0); }, x) == 0.0);
}

TEST_CASE("gradients accumulate until cleared") {
  Var v = ad::variable(Eigen::MatrixXd::Constant(1, 1, 3.0));
  ad::backward(ad::square(v));
  ad::backward(ad::square(v));
  CHECK(v.grad()(0, 0) == 12.0);
  v.zero_grad();
  CHECK(v.grad()(0, 0) == 0.0);
}

TEST_CASE("shared subexpressions are counted once per use") {
  Var v = ad::variable(Eigen::MatrixXd::Constant(1, 1, 2.0));
  const Var y = ad::square(v);
  ad::backward(y + y);  // 2 v^2
  CHECK(v.grad()(0, 0) == 8.0);
}

TEST_CASE("every operation passes a central-difference check") {
  std::mt19937_64 rng(31);
  const Eigen::MatrixXd a = test::random_matrix(rng, 3, 4);
  const Eigen::MatrixXd b = test::random_matrix(rng, 3, 4);
  const Eigen::MatrixXd m = test::random_matrix(rng, 4, 5);
  const Eigen::MatrixXd row = test::random_matrix(rng, 1, 4);
  const Eigen::MatrixXd positive = test::random_matrix(rng, 3, 4, 0.1, 2.0);
  const double tol = 1e-4;

  CHECK(ad::grad_check([&](const Var& x) { return probe(x + ad::constant(b)); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::constant(b) - x); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(2.5 * x); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::matmul(x, ad::constant(m))); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::matmul(ad::constant(a), x)); }, m) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::cwise_mul(x, x)); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::add_row(ad::constant(a), x)); }, row) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::add_row(x, ad::constant(row))); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::transpose(x)); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::tanh(x)); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::relu(x)); }, away_from_zero(a)) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::gelu(x)); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::softplus(x)); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::square(x)); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::log_clamped(x, 1e-6)); }, positive) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::softmax_rows(x)); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::slice_cols(x, 1, 2)); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::slice_rows(x, 1, 2)); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::concat_cols({x, ad::constant(b), x})); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return probe(ad::reshape(x, 2, 6)); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return ad::sum(x); }, a) < tol);
  CHECK(ad::grad_check([&](const Var& x) { return ad::squared_norm(x); }, a) < tol);
}

TEST_CASE("layer norm gradients for input, gain and bias") {
  std::mt19937_64 rng(32);
  const Eigen::MatrixXd x = test::random_matrix(rng, 3, 6);
  const Eigen::MatrixXd g = test::random_matrix(rng, 1, 6, 0.5, 1.5);
  const Eigen::MatrixXd b = test::random_matrix(rng, 1, 6);
  CHECK(ad::grad_check([&](const Var& v) { return probe(ad::layer_norm_rows(v, ad::constant(g), ad::constant(b))); }, x) <
        1e-4);
  CHECK(ad::grad_check([&](const Var& v) { return probe(ad::layer_norm_rows(ad::constant(x), v, ad::constant(b))); }, g) <
        1e-4);
  CHECK(ad::grad_check([&](const Var& v) { return probe(ad::layer_norm_rows(ad::constant(x), ad::constant(g), v)); }, b) <
        1e-4);
}

TEST_CASE("softmax rows lie on the simplex") {
  std::mt19937_64 rng(33);
  const auto y = ad::softmax_rows(ad::constant(test::random_matrix(rng, 10, 8, -50.0, 50.0))).value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    CHECK(std::abs(y.row(r).sum() - 1.0) < 1e-12);
    CHECK((y.row(r).array() >= 0.0).all());
  }
}

TEST_CASE("reshape is row-major") {
  Eigen::MatrixXd a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  const auto r = ad::reshape(ad::constant(a), 3, 2).value();
  CHECK(r(0, 1) == 2.0);
  CHECK(r(1, 0) == 3.0);
  CHECK(r(2, 1) == 6.0);
}

TEST_CASE("shape mismatches are rejected") {
  const Var a = ad::constant(Eigen::MatrixXd::Zero(2, 3));
  const Var b = ad::constant(Eigen::MatrixXd::Zero(3, 2));
  CHECK_ERROR_CODE(a + b, ErrorCode::ShapeMismatch);
  CHECK_ERROR_CODE(ad::matmul(a, a), ErrorCode::ShapeMismatch);
  CHECK_ERROR_CODE(ad::reshape(a, 4, 2), ErrorCode::ShapeMismatch);
  CHECK_ERROR_CODE(ad::backward(a), ErrorCode::ShapeMismatch);
}

TEST_CASE("grad_check reports non-finite values") {
  CHECK_ERROR_CODE(ad::grad_check([](const Var& x) { return ad::sum(ad::log_clamped(x, 0.0)); },
                                  Eigen::MatrixXd::Zero(1, 1)),
                   ErrorCode::NonFiniteValue);
}

TEST_CASE("scalar helpers") {
  for (double x : {-30.0, -1.0, 0.0, 0.5, 3.0, 40.0}) {
    CHECK(ad::inverse_softplus(ad::softplus(x)) == doctest::Approx(x).epsilon(1e-9));
    CHECK(ad::sigmoid(x) == doctest::Approx(1.0 / (1.0 + std::exp(-x))));
  }
  CHECK(ad::softplus(1000.0) == 1000.0);
}
