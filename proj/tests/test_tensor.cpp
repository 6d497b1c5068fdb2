#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aae/tensor.hpp"

using namespace aae;
using Eigen::MatrixXd;

TEST_CASE("add with row broadcast") {
  MatrixXd a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  MatrixXd b(1, 3);
  b << 10, 20, 30;
  Tensor r = add(Tensor(a), Tensor(b));
  CHECK(r.value()(0, 0) == 11);
  CHECK(r.value()(1, 2) == 36);
}

TEST_CASE("matmul forward and backward") {
  Tape tape;
  MatrixXd av(2, 3), bv(3, 2);
  av << 1, 2, 3, 4, 5, 6;
  bv << 1, 0, 0, 1, 1, 1;
  Tensor a = tape.leaf(av);
  Tensor b = tape.leaf(bv);
  Tensor s = sum(matmul(a, b));
  CHECK(s.item() == doctest::Approx(4 + 5 + 10 + 11));
  tape.backward(s);
  // d sum(AB) / dA = ones * B^T
  MatrixXd expect_a = MatrixXd::Ones(2, 2) * bv.transpose();
  CHECK((a.grad() - expect_a).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  MatrixXd expect_b = av.transpose() * MatrixXd::Ones(2, 2);
  CHECK((b.grad() - expect_b).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("gradient accumulates across reuse") {
  Tape tape;
  Tensor x = tape.leaf(MatrixXd::Constant(1, 1, 3.0));
  Tensor y = add(mul(x, x), x);  // x^2 + x
  tape.backward(sum(y));
  CHECK(x.grad()(0, 0) == doctest::Approx(2 * 3.0 + 1.0));
}

TEST_CASE("log_softmax rows sum to one after exp") {
  Tape tape;
  MatrixXd v(2, 4);
  v << 1, -2, 0.5, 3, 0, 0, 0, 0;
  Tensor ls = log_softmax(tape.leaf(v));
  for (int r = 0; r < 2; ++r)
    CHECK(ls.value().row(r).array().exp().sum() == doctest::Approx(1.0));
  // uniform row: each logprob is -ln 4
  CHECK(ls.value()(1, 0) == doctest::Approx(-std::log(4.0)));
}

TEST_CASE("slice and concat invert each other") {
  MatrixXd v(4, 3);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) v(r, c) = 10 * r + c;
  Tensor t(v);
  Tensor back = concat_rows({slice_rows(t, 0, 2), slice_rows(t, 2, 2)});
  CHECK((back.value() - v).cwiseAbs().maxCoeff() == 0.0);
  Tensor back2 = concat_cols({slice_cols(t, 0, 1), slice_cols(t, 1, 2)});
  CHECK((back2.value() - v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pick and gather_rows") {
  MatrixXd v(3, 2);
  v << 1, 2, 3, 4, 5, 6;
  CHECK(pick(Tensor(v), 2, 1).item() == 6);
  Tensor g = gather_rows(Tensor(v), {2, 0});
  CHECK(g.value()(0, 0) == 5);
  CHECK(g.value()(1, 1) == 2);
}

TEST_CASE("same-padded conv1d matches a hand computation") {
  // input T=3, Cin=1; kernel width 3, Cout=1; kernel rows tap-major
  MatrixXd x(3, 1);
  x << 1, 2, 3;
  MatrixXd k(3, 1);
  k << 1, 10, 100;  // taps -1, 0, +1
  MatrixXd b = MatrixXd::Zero(1, 1);
  Tensor y = conv1d(Tensor(x), Tensor(k), Tensor(b), 3);
  CHECK(y.value()(0, 0) == doctest::Approx(0 * 1 + 1 * 10 + 2 * 100));
  CHECK(y.value()(1, 0) == doctest::Approx(1 * 1 + 2 * 10 + 3 * 100));
  CHECK(y.value()(2, 0) == doctest::Approx(2 * 1 + 3 * 10 + 0 * 100));
}

TEST_CASE("backward is linear: scaling the loss scales the gradient") {
  MatrixXd v(2, 2);
  v << 0.3, -1.2, 0.7, 2.0;
  MatrixXd g1, g3;
  for (double k : {1.0, 3.0}) {
    Tape tape;
    Tensor x = tape.leaf(v);
    Tensor s = scale(sum(tanh_op(x)), k);
    tape.backward(s);
    (k == 1.0 ? g1 : g3) = x.grad();
  }
  CHECK((g3 - 3.0 * g1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("shape mismatch names the op") {
  Tensor a(MatrixXd::Zero(2, 3)), b(MatrixXd::Zero(3, 3));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  try {
    matmul(a, a);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
}

TEST_CASE("non-finite results are rejected") {
  Tensor a(MatrixXd::Constant(1, 1, 1e308));
  CHECK_THROWS_AS(mul(a, a), NumericalError);
  CHECK_THROWS_AS(exp_op(Tensor(MatrixXd::Constant(1, 1, 1000.0))),
                  NumericalError);
}

TEST_CASE("tape misuse is rejected") {
  Tape t1, t2;
  Tensor a = t1.leaf(MatrixXd::Ones(2, 2));
  Tensor b = t2.leaf(MatrixXd::Ones(2, 2));
  CHECK_THROWS_AS(add(a, b), NumericalError);  // cross-tape

  Tensor s = sum(a);
  t1.backward(s);
  CHECK_THROWS_AS(t1.backward(s), NumericalError);  // single-use graph
}

TEST_CASE("backward requires a tracked scalar root") {
  Tape tape;
  Tensor x = tape.leaf(MatrixXd::Ones(2, 2));
  Tensor y = add(x, x);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);  // not scalar
  Tensor untracked = Tensor::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(untracked), NumericalError);
}

TEST_CASE("ops without tracked operands stay untracked") {
  Tensor a(MatrixXd::Ones(2, 2));
  Tensor r = tanh_op(add(a, a));
  CHECK_FALSE(r.tracked());
}

TEST_CASE("identical graphs give identical bits") {
  auto run = [] {
    Tape tape;
    MatrixXd v(3, 3);
    double f = 0.1;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) v(r, c) = (f += 0.37);
    Tensor x = tape.leaf(v);
    Tensor s = sum(log_softmax(matmul(tanh_op(x), x)));
    tape.backward(s);
    return std::make_pair(s.item(), MatrixXd(x.grad()));
  };
  auto [s1, g1] = run();
  auto [s2, g2] = run();
  CHECK(s1 == s2);
  CHECK(g1 == g2);
}
