#include <doctest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <cmath>

#include "gradcheck.hpp"
#include "saf/autodiff.hpp"
#include "saf/errors.hpp"

using namespace saf;
using namespace saf::test;
using Big = boost::multiprecision::cpp_dec_float_50;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  std::vector<std::vector<double>> v;
  for (auto& row : r) v.emplace_back(row);
  return Matrix::from_rows(v);
}

// Mean negative log-softmax at the labels, built from primitives.
Tensor cross_entropy_like(const Tensor& logits, const std::vector<int>& y) {
  return scale(sum(pick(log_softmax_rows(logits), y)), -1.0 / static_cast<double>(y.size()));
}

}  // namespace

TEST_CASE("matmul values and shape errors") {
  Tape tape;
  CHECK(matmul(tape.constant(rows({{1, 0}, {0, 1}})), tape.constant(rows({{3, 4}, {5, 6}}))).value() ==
        rows({{3, 4}, {5, 6}}));
  CHECK(matmul(tape.constant(rows({{1, 2}})), tape.constant(rows({{3}, {4}}))).value() ==
        rows({{11}}));
  try {
    matmul(tape.constant(Matrix(2, 3)), tape.constant(Matrix(2, 3)));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("2x3") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum is the broadcast column sums of b") {
  std::mt19937_64 rng(1);
  Matrix a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng);
  Tape tape;
  Tensor ta = tape.variable(a);
  tape.backward(sum(matmul(ta, tape.constant(b))));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(ta.grad()(i, j) == doctest::Approx(b(j, 0) + b(j, 1)));
  }
}

TEST_CASE("relu values and dead gradient") {
  Tape tape;
  Tensor x = tape.variable(rows({{-1, 0, 2}}));
  Tensor y = relu(x);
  CHECK(y.value() == rows({{0, 0, 2}}));
  tape.backward(sum(y));
  CHECK(x.grad() == rows({{0, 0, 1}}));

  Tape t2;
  Tensor n = t2.variable(rows({{-1, -2}, {-0.5, -3}}));
  Tensor out = relu(n);
  t2.backward(sum(out));
  CHECK(out.value() == Matrix(2, 2, 0.0));
  CHECK(n.grad() == Matrix(2, 2, 0.0));
}

TEST_CASE("sigmoid values against a high-precision oracle") {
  Tape tape;
  CHECK(sigmoid(tape.constant(Matrix(1, 1, 0.0))).item() == 0.5);
  for (double x : {-7.3, -1.0, 0.4, 3.3}) {
    const double s = sigmoid(tape.constant(Matrix(1, 1, x))).item();
    const double r = sigmoid(tape.constant(Matrix(1, 1, -x))).item();
    CHECK(std::abs(s - (1.0 - r)) <= 1e-15);
  }
  const Big oracle = Big(1) / (Big(1) + boost::multiprecision::exp(Big("-4.2")));
  CHECK(std::abs(sigmoid(tape.constant(Matrix(1, 1, 4.2))).item() - oracle.convert_to<double>()) <= 1e-12);
  Matrix extreme = sigmoid(tape.constant(rows({{-800, 800}}))).value();
  CHECK(extreme.all_finite());
}

TEST_CASE("softmax rows: uniform, shift invariance, oracle") {
  Tape tape;
  Matrix u = softmax_rows(tape.constant(Matrix(1, 4, 0.0))).value();
  for (double v : u.data()) CHECK(v == 0.25);

  std::mt19937_64 rng(2);
  Matrix x = random_matrix(5, 4, rng, -5, 5);
  Matrix shifted = x;
  for (std::size_t j = 0; j < 4; ++j) shifted(2, j) += 123.25;
  Matrix a = softmax_rows(tape.constant(x)).value(), b = softmax_rows(tape.constant(shifted)).value();
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      s += a(i, j);
      CHECK(std::abs(a(i, j) - b(i, j)) <= 1e-12);
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }

  Matrix p = softmax_rows(tape.constant(rows({{1, 2, 3}}))).value();
  Big z = 0;
  for (int k = 1; k <= 3; ++k) z += boost::multiprecision::exp(Big(k));
  for (int k = 1; k <= 3; ++k) {
    const Big o = boost::multiprecision::exp(Big(k)) / z;
    CHECK(std::abs(p(0, static_cast<std::size_t>(k - 1)) - o.convert_to<double>()) <= 1e-12);
  }
}

TEST_CASE("log_softmax never evaluates log(0)") {
  Tape tape;
  Matrix v = log_softmax_rows(tape.constant(rows({{-1000, 0, 1000}}))).value();
  CHECK(v.all_finite());
  CHECK(v(0, 2) == 0.0);
  CHECK(v(0, 0) == -2000.0);
}

TEST_CASE("dropout modes and statistics") {
  Rng rng(3);
  Tape tape;
  std::mt19937_64 g(4);
  Matrix x = random_matrix(4, 5, g, 0.5, 1.5);
  CHECK(dropout(tape.constant(x), 0.0, true, rng).value() == x);
  CHECK(dropout(tape.constant(x), 0.5, false, rng).value() == x);
  CHECK_THROWS_AS(dropout(tape.constant(x), 1.0, true, rng), ConfigError);
  CHECK_THROWS_AS(dropout(tape.constant(x), -0.1, true, rng), ConfigError);

  Matrix big = random_matrix(1000, 100, g, 0.5, 1.5);
  Matrix out = dropout(tape.constant(big), 0.5, true, rng).value();
  std::size_t kept = 0;
  double in_mean = 0.0, out_mean = 0.0;
  for (std::size_t i = 0; i < big.size(); ++i) {
    if (out[i] != 0.0) {
      ++kept;
      CHECK(out[i] == doctest::Approx(2.0 * big[i]).epsilon(1e-15));
    }
    in_mean += big[i];
    out_mean += out[i];
  }
  CHECK(std::abs(static_cast<double>(kept) / static_cast<double>(big.size()) - 0.5) <= 0.01);
  CHECK(std::abs(out_mean / in_mean - 1.0) <= 0.02);
}

TEST_CASE("batch norm: identity on standardised columns, gamma zero, batch statistics") {
  Tape tape;
  BatchNormState state(1);
  Matrix x = rows({{-1}, {1}});
  // Unit population variance after the epsilon: x / sqrt(1 + 1e-5).
  Matrix y = batch_norm(tape.constant(x), tape.constant(Matrix(1, 1, 1.0)), tape.constant(Matrix(1, 1, 0.0)),
                        state, true)
                 .value();
  CHECK(std::abs(y(0, 0) + 1.0) <= 1e-4);
  CHECK(std::abs(y(1, 0) - 1.0) <= 1e-4);

  std::mt19937_64 g(5);
  Matrix r = random_matrix(7, 3, g, -4, 9);
  BatchNormState s3(3);
  Matrix beta = random_matrix(1, 3, g);
  Matrix z = batch_norm(tape.constant(r), tape.constant(Matrix(1, 3, 0.0)), tape.constant(beta), s3, true).value();
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(z(i, j) == beta(0, j));
  }

  BatchNormState s4(3);
  Matrix n = batch_norm(tape.constant(r), tape.constant(Matrix(1, 3, 1.0)), tape.constant(Matrix(1, 3, 0.0)), s4, true).value();
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0.0, v = 0.0, raw_var = 0.0, raw_mean = 0.0;
    for (std::size_t i = 0; i < 7; ++i) m += n(i, j), raw_mean += r(i, j);
    m /= 7, raw_mean /= 7;
    for (std::size_t i = 0; i < 7; ++i) v += (n(i, j) - m) * (n(i, j) - m), raw_var += (r(i, j) - raw_mean) * (r(i, j) - raw_mean);
    v /= 7;
    CHECK(std::abs(m) <= 1e-10);
    // The epsilon shrinks the variance by var / (var + eps).
    const double pop = raw_var / 7;
    CHECK(std::abs(v - pop / (pop + 1e-5)) <= 1e-6);
    CHECK(std::abs(v - 1.0) <= 1e-5);
    CHECK(s4.running_mean(0, j) == doctest::Approx(0.1 * raw_mean).epsilon(1e-12));
    CHECK(s4.running_var(0, j) == doctest::Approx(0.9 + 0.1 * raw_var / 6).epsilon(1e-12));
  }

  BatchNormState frozen(3);
  batch_norm(tape.constant(r), tape.constant(Matrix(1, 3, 1.0)), tape.constant(Matrix(1, 3, 0.0)), frozen, true, false);
  CHECK(frozen.running_mean == Matrix(1, 3, 0.0));
  CHECK(frozen.running_var == Matrix(1, 3, 1.0));

  CHECK_THROWS_AS(batch_norm(tape.constant(Matrix(1, 3)), tape.constant(Matrix(1, 3, 1.0)),
                             tape.constant(Matrix(1, 3, 0.0)), frozen, true),
                  BatchError);
  CHECK_NOTHROW(batch_norm(tape.constant(Matrix(1, 3)), tape.constant(Matrix(1, 3, 1.0)),
                           tape.constant(Matrix(1, 3, 0.0)), frozen, false));
}

TEST_CASE("grad_reverse is a forward identity with a scaled, negated gradient") {
  std::mt19937_64 g(6);
  Matrix x = random_matrix(3, 3, g);
  for (double lambda : {0.0, 0.1}) {
    Tape tape;
    Tensor v = tape.variable(x);
    Tensor y = grad_reverse(v, lambda);
    CHECK(y.value() == x);
    tape.backward(sum(y));
    for (double d : v.grad().data()) CHECK(d == -lambda);
  }
  Tape tape;
  CHECK_THROWS_AS(grad_reverse(tape.constant(x), -0.5), ConfigError);
}

TEST_CASE("backward: sums, reuse and errors") {
  Tape tape;
  Tensor x = tape.variable(rows({{1, 2}, {3, 4}}));
  tape.backward(add(sum(x), sum(x)));
  CHECK(x.grad() == Matrix(2, 2, 2.0));

  Tape t2;
  Tensor y = t2.variable(Matrix(2, 2, 1.0));
  CHECK_THROWS_AS(t2.backward(y), ShapeError);

  Tape t3;
  Tensor z = t3.variable(Matrix(1, 1, 1.0));
  Tensor l = sum(z);
  t3.backward(l);
  CHECK_THROWS_AS(t3.backward(l), StateError);
}

TEST_CASE("a parameter used twice accumulates into one gradient") {
  Parameter p("w", Matrix(1, 2, 3.0));
  Tape tape;
  Tensor a = tape.parameter(p);
  Tensor b = tape.parameter(p);
  CHECK(a.id() == b.id());
  CHECK(tape.parameters().size() == 1);
  tape.backward(add(sum(a), sum(mul(b, b))));
  CHECK(p.grad == Matrix(1, 2, 7.0));
  CHECK(p.has_grad);
}

TEST_CASE("batch splitting: averaged half-batch gradients equal the full batch") {
  std::mt19937_64 g(7);
  Parameter w("w", random_matrix(3, 2, g));
  Parameter b("b", random_matrix(1, 2, g));
  Matrix x = random_matrix(8, 3, g);
  std::vector<int> y = {0, 1, 1, 0, 1, 0, 0, 1};
  auto loss_grad = [&](std::size_t lo, std::size_t hi) {
    w.clear_grad();
    b.clear_grad();
    Tape tape;
    Tensor xs = slice_rows(tape.constant(x), lo, hi);
    std::vector<int> ys(y.begin() + static_cast<long>(lo), y.begin() + static_cast<long>(hi));
    Tensor hidden = relu(add_row(matmul(xs, tape.parameter(w)), tape.parameter(b)));
    tape.backward(cross_entropy_like(hidden, ys));
    std::vector<double> out = w.grad.data();
    out.insert(out.end(), b.grad.data().begin(), b.grad.data().end());
    return out;
  };
  std::vector<double> full = loss_grad(0, 8), first = loss_grad(0, 4), second = loss_grad(4, 8);
  for (std::size_t i = 0; i < full.size(); ++i) CHECK(std::abs(full[i] - 0.5 * (first[i] + second[i])) <= 1e-10);
}

TEST_CASE("operations reject mismatched shapes and foreign tapes") {
  Tape a, b;
  CHECK_THROWS_AS(add(a.constant(Matrix(2, 2)), a.constant(Matrix(2, 3))), ShapeError);
  CHECK_THROWS_AS(add(a.constant(Matrix(2, 2)), b.constant(Matrix(2, 2))), StateError);
  CHECK_THROWS_AS(add_row(a.constant(Matrix(2, 2)), a.constant(Matrix(1, 3))), ShapeError);
  CHECK_THROWS_AS(mul_rows(a.constant(Matrix(3, 1)), a.constant(Matrix(2, 2))), ShapeError);
  CHECK_THROWS_AS(slice_rows(a.constant(Matrix(2, 2)), 1, 3), ShapeError);
  std::vector<std::size_t> bad = {5};
  CHECK_THROWS_AS(gather_rows(a.constant(Matrix(2, 2)), bad), ShapeError);
  std::vector<int> idx = {0, 7};
  CHECK_THROWS_AS(pick(a.constant(Matrix(2, 2)), idx), DataError);
  std::vector<int> short_idx = {0};
  CHECK_THROWS_AS(pick(a.constant(Matrix(2, 2)), short_idx), ShapeError);
}

TEST_CASE("detach blocks the gradient") {
  Tape tape;
  Tensor x = tape.variable(Matrix(2, 2, 1.5));
  tape.backward(add(sum(detach(x)), sum(affine(x, 0.0, 0.0))));
  for (double d : x.grad().data()) CHECK(d == 0.0);
}
