// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "oracles.hpp"
#include "semflow/param_set.hpp"

using namespace semflow;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

// Central-difference check of d sum(weights * f(x)) / dx for a unary op.
double unary_fd_error(const std::function<Var(const Var&)>& op, const Matrix& x0, const Matrix& weights) {
  ParamSet p;
  p.add("x", x0);
  return grad_check(
      [&](Tape& t, const std::vector<Var>& v) { return sum(op(v[0]) * t.constant(weights)); }, p, 1e-5);
}

}  // namespace

TEST_CASE("forward_eval: square and identity") {
  Tape t;
  Var x = t.variable(scalar(3.0));
  CHECK((x * x).scalar() == 9.0);
  CHECK(square(x).scalar() == 9.0);

  std::mt19937_64 rng(1);
  Matrix m = oracle::random_matrix(3, 4, rng);
  Var v = t.constant(m);
  CHECK(v.value() == m);
  CHECK(slice(v, 0, 0, 3, 4).value() == m);
}

TEST_CASE("forward_eval: 2-layer tanh MLP equals straight-line loops") {
  std::mt19937_64 rng(0);
  const Matrix w1 = oracle::random_matrix(5, 4, rng);
  const Matrix b1 = oracle::random_matrix(5, 1, rng);
  const Matrix w2 = oracle::random_matrix(3, 5, rng);
  const Matrix b2 = oracle::random_matrix(3, 1, rng);
  const Matrix x = oracle::random_matrix(4, 1, rng);

  Tape t;
  Var h = tanh(matmul(t.variable(w1), t.constant(x)) + t.variable(b1));
  Var y = matmul(t.variable(w2), h) + t.variable(b2);

  const auto ref = oracle::mlp_loops({w1, w2}, {b1, b2}, oracle::to_std(x.col(0)));
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(y.value()(i, 0) - ref[static_cast<std::size_t>(i)]) < 1e-12);
}

TEST_CASE("forward_eval: shape mismatch names both shapes") {
  Tape t;
  Var a = t.constant(Matrix::Zero(2, 3));
  Var b = t.constant(Matrix::Zero(2, 3));
  try {
    (void)matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ad::ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("matmul") != std::string::npos);
  }
  CHECK_THROWS_AS((void)(a + t.constant(Matrix::Zero(3, 2))), ad::ShapeError);
  CHECK_THROWS_AS((void)slice(a, 1, 1, 2, 2), ad::ShapeError);
  CHECK_NOTHROW((void)(a * t.constant(2.0)));
}

TEST_CASE("backward_grad: analytic cases") {
  Tape t;
  Var x = t.variable(scalar(3.0));
  auto g = backward_grad(square(x), {x});
  CHECK(g[0](0, 0) == doctest::Approx(6.0));

  Tape t2;
  Var a = t2.variable(scalar(2.0));
  Var b = t2.variable(scalar(5.0));
  auto gab = backward_grad(a * b, {a, b});
  CHECK(gab[0](0, 0) == 5.0);
  CHECK(gab[1](0, 0) == 2.0);
}

TEST_CASE("backward_grad: a node used twice accumulates both paths") {
  Tape t;
  Var x = t.variable(scalar(1.7));
  auto g = backward_grad(x + x, {x});
  CHECK(g[0](0, 0) == 2.0);
}

TEST_CASE("backward_grad: non-scalar root is rejected") {
  Tape t;
  Var x = t.variable(Matrix::Ones(2, 1));
  CHECK_THROWS_AS(t.backward(x * x), ad::ShapeError);
}

TEST_CASE("backward_grad: gradients keep parameter shapes, unused leaves get zeros") {
  Tape t;
  Var used = t.variable(Matrix::Ones(3, 2));
  Var unused = t.variable(Matrix::Ones(4, 5));
  auto g = backward_grad(sum(used), {used, unused});
  CHECK(g[0].rows() == 3);
  CHECK(g[0].cols() == 2);
  CHECK(g[1].rows() == 4);
  CHECK(g[1].cols() == 5);
  CHECK(g[1].isZero(0));
}

TEST_CASE("backward_grad: random 2-layer MLP loss matches finite differences") {
  std::mt19937_64 rng(7);
  ParamSet p;
  p.add("w1", oracle::random_matrix(6, 4, rng));
  p.add("b1", oracle::random_matrix(6, 1, rng));
  p.add("w2", oracle::random_matrix(2, 6, rng));
  p.add("b2", oracle::random_matrix(2, 1, rng));
  const Matrix x = oracle::random_matrix(4, 3, rng);
  auto f = [&](Tape& t, const std::vector<Var>& v) {
    Var ones = t.constant(Matrix::Ones(1, 3));
    Var h = tanh(matmul(v[0], t.constant(x)) + matmul(v[1], ones));
    Var y = matmul(v[2], h) + matmul(v[3], ones);
    return mean(square(y));
  };
  CHECK(grad_check(f, p, 1e-5) < 1e-4);
}

TEST_CASE("property: every op's gradient matches finite differences over 100 seeds") {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix x = oracle::random_matrix(3, 4, rng);
    const Matrix y = oracle::random_matrix(3, 4, rng);
    const Matrix k = oracle::random_matrix(4, 2, rng);
    const Matrix wts = oracle::random_matrix(3, 4, rng);
    const double c = std::normal_distribution<double>(0, 1)(rng);

    worst = std::max(worst, unary_fd_error([](const Var& a) { return tanh(a); }, x, wts));
    worst = std::max(worst, unary_fd_error([](const Var& a) { return sigmoid(a); }, x, wts));
    worst = std::max(worst, unary_fd_error([](const Var& a) { return softplus(a); }, x, wts));
    worst = std::max(worst, unary_fd_error([](const Var& a) { return square(a); }, x, wts));
    worst = std::max(worst, unary_fd_error([c](const Var& a) { return scale(a, c); }, x, wts));
    worst = std::max(worst, unary_fd_error([&](const Var& a) { return a * a.tape()->constant(y); }, x, wts));
    worst = std::max(worst, unary_fd_error([&](const Var& a) { return a + a.tape()->constant(y); }, x, wts));
    worst = std::max(worst, unary_fd_error([&](const Var& a) { return a.tape()->constant(y) - a; }, x, wts));
    worst = std::max(worst, unary_fd_error([&](const Var& a) { return a * a.tape()->constant(c); }, x, wts));
    worst = std::max(worst, unary_fd_error(
        [&](const Var& a) { return a - slice(a, 1, 2, 1, 1); }, x, wts));
    worst = std::max(worst, unary_fd_error(
        [&](const Var& a) { return concat<Scalar>({slice(a, 0, 0, 3, 2), a}, ad::Axis::Cols) ; }, x,
        oracle::random_matrix(3, 6, rng)));
    worst = std::max(worst, unary_fd_error(
        [&](const Var& a) { return concat<Scalar>({a, square(a)}, ad::Axis::Rows); }, x,
        oracle::random_matrix(6, 4, rng)));
    worst = std::max(worst, unary_fd_error(
        [&](const Var& a) { return matmul(a, a.tape()->constant(k)); }, x, oracle::random_matrix(3, 2, rng)));
    worst = std::max(worst, unary_fd_error(
        [&](const Var& a) { return matmul(a.tape()->constant(k.transpose()), a.tape()->constant(y.transpose()) * tanh(a.tape()->constant(x.transpose()))) * mean(a); }, x,
        oracle::random_matrix(2, 3, rng)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("grad_check: quadratic form is exact, zero function gives zero") {
  std::mt19937_64 rng(3);
  const Matrix a = oracle::random_matrix(4, 4, rng);
  ParamSet p;
  p.add("x", oracle::random_matrix(4, 1, rng));
  auto quad = [&](Tape& t, const std::vector<Var>& v) {
    return sum(v[0] * matmul(t.constant(a), v[0]));
  };
  CHECK(grad_check(quad, p, 1e-4) < 1e-6);
  CHECK(grad_check(quad, p, 1e-5) < 1e-6);
  auto zero = [](Tape& t, const std::vector<Var>&) { return t.constant(0.0); };
  CHECK(grad_check(zero, p, 1e-5) == 0.0);
  CHECK_THROWS_AS((void)grad_check(zero, p, 0.0), std::invalid_argument);
}

TEST_CASE("determinism: identical inputs give bit-identical values and gradients") {
  auto run = [] {
    std::mt19937_64 rng(11);
    Tape t;
    Var w = t.variable(oracle::random_matrix(5, 5, rng));
    Var x = t.constant(oracle::random_matrix(5, 7, rng));
    Var loss = mean(softplus(matmul(w, tanh(matmul(w, x)))));
    t.backward(loss);
    return std::make_pair(loss.scalar(), Matrix(w.grad()));
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("checkpoint: save/load round trip is bit-exact") {
  std::mt19937_64 rng(5);
  ParamSet p;
  p.add("layer.weight", oracle::random_matrix(3, 7, rng));
  p.add("layer.bias", oracle::random_matrix(3, 1, rng));
  p.add("scalar", Matrix::Constant(1, 1, -0.0));
  p.add("row", oracle::random_matrix(1, 4, rng));
  const auto path = std::filesystem::temp_directory_path() / "semflow_ckpt_test.sdfw";
  save_params(path, p);
  ParamSet q = load_params(path);
  CHECK(p == q);
  CHECK(q[1].value.cols() == 1);
  CHECK(q[3].value.rows() == 1);

  // Header layout: magic, version, count, then the first name.
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  REQUIRE(f != nullptr);
  unsigned char head[16];
  REQUIRE(std::fread(head, 1, sizeof(head), f) == sizeof(head));
  std::fclose(f);
  CHECK(std::string(reinterpret_cast<char*>(head), 4) == "SDFW");
  CHECK(head[4] == 1);
  CHECK(head[8] == 4);
  CHECK(head[12] == 12);  // u16 name length of "layer.weight"
  CHECK(head[13] == 0);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint: corrupt or missing files are reported with the path") {
  const auto path = std::filesystem::temp_directory_path() / "semflow_bad.sdfw";
  {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    std::fputs("NOPE", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS((void)load_params(path), IoError);
  std::filesystem::remove(path);
  try {
    (void)load_params(path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("semflow_bad.sdfw") != std::string::npos);
  }
}
