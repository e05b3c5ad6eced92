#include "doctest.h"

#include <cmath>
#include <random>

#include "qean/numerics.hpp"

using namespace qean;

namespace {

void require_errc(Errc want, auto&& fn) {
  try {
    fn();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == want);
  }
}

}  // namespace

TEST_SUITE("numerics") {
  TEST_CASE("matmul examples") {
    const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
    CHECK(matmul(Matrix::identity(2), b) == b);
    CHECK(matmul(Matrix::from_rows({{1, 2}, {3, 4}}), b) == Matrix::from_rows({{19, 22}, {43, 50}}));
    require_errc(Errc::DimensionMismatch, [] { matmul(Matrix(2, 3), Matrix(2, 2)); });
  }

  TEST_CASE("transposed products agree with explicit transposes") {
    std::mt19937_64 rng(3);
    const Matrix a = random_normal(7, 5, 1.0, rng), b = random_normal(9, 5, 1.0, rng);
    const Matrix c = random_normal(7, 4, 1.0, rng);
    CHECK(max_abs_diff(matmul_nt(a, b), matmul(a, b.transposed())) < 1e-14);
    CHECK(max_abs_diff(matmul_tn(a, c), matmul(a.transposed(), c)) < 1e-14);
  }

  TEST_CASE("kernels are bit-identical to the serial references") {
    std::mt19937_64 rng(17);
    const Matrix a = random_normal(130, 70, 1.0, rng), b = random_normal(70, 90, 1.0, rng);
    const Matrix bt = random_normal(90, 70, 1.0, rng), c = random_normal(130, 40, 1.0, rng);
    CHECK(matmul(a, b) == serial::matmul(a, b));
    CHECK(matmul_nt(a, bt) == serial::matmul_nt(a, bt));
    CHECK(matmul_tn(a, c) == serial::matmul_tn(a, c));
    CHECK(softmax_rows(a) == serial::softmax_rows(a));
    ConvKernel k(70, 9, 5);
    k.weights = random_normal(350, 9, 0.2, rng);
    k.bias = random_normal(1, 9, 0.2, rng);
    CHECK(conv1d(a, k) == serial::conv1d(a, k));
  }

  TEST_CASE("softmax examples") {
    const Matrix s = softmax_rows(Matrix::from_rows({{0, 0}}));
    CHECK(s(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    for (double c : {-700.0, 0.0, 3.5, 900.0}) {
      const Matrix t = softmax_rows(Matrix::from_rows({{c, c + std::log(3.0)}}));
      CHECK(std::abs(t(0, 0) - 0.25) < 1e-12);
      CHECK(std::abs(t(0, 1) - 0.75) < 1e-12);
    }
  }

  TEST_CASE("conv1d examples") {
    ConvKernel k(1, 1, 3);
    k.weights = Matrix::from_rows({{1}, {0}, {-1}});
    const Matrix x = Matrix::from_rows({{1}, {2}, {3}});
    CHECK(conv1d(x, k) == Matrix::from_rows({{-2}, {-2}, {2}}));
    k.weights = Matrix::from_rows({{0}, {1}, {0}});
    CHECK(conv1d(x, k) == x);
    ConvKernel z(2, 2, 3);
    z.bias = Matrix::from_rows({{0.5, -1.5}});
    const Matrix y = conv1d(Matrix(4, 2, 7.0), z);
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(y(t, 0) == 0.5);
      CHECK(y(t, 1) == -1.5);
    }
  }

  TEST_CASE("activations") {
    CHECK(relu(-3.0) == 0.0);
    CHECK(relu(2.0) == 2.0);
    CHECK(pi_tanh(0.0) == 0.0);
    CHECK(pi_tanh(20.0) < M_PI);
    CHECK(pi_tanh(20.0) > 3.14159);
  }

  TEST_CASE("sym_sqrt examples") {
    CHECK(max_abs_diff(sym_sqrt(Matrix::identity(3)), Matrix::identity(3)) < 1e-14);
    const Matrix r = sym_sqrt(Matrix::from_rows({{4, 0}, {0, 9}}));
    CHECK(max_abs_diff(r, Matrix::from_rows({{2, 0}, {0, 3}})) < 1e-12);
    require_errc(Errc::NotSymmetric, [] { sym_sqrt(Matrix::from_rows({{1, 0.5}, {0.4, 1}})); });
  }

  TEST_CASE("sym_sqrt squares back on random PSD matrices") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix a = random_normal(6, 6, 1.0, rng);
      const Matrix s = matmul_tn(a, a);
      const Matrix r = sym_sqrt(s);
      CHECK(max_abs_diff(matmul(r, r), s) < 1e-9);
    }
  }

  TEST_CASE("grad_check examples") {
    Matrix x = Matrix::from_rows({{3.0}});
    Matrix g = Matrix::from_rows({{6.0}});
    const GradTarget t[] = {{"x", &x, &g}};
    const GradReport r = grad_check([&] { return x(0, 0) * x(0, 0); }, t);
    CHECK(r.max_rel_error < 1e-9);
    CHECK(r.pass);
    Matrix zero(1, 1);
    const GradTarget c[] = {{"x", &x, &zero}};
    CHECK(grad_check([] { return 4.0; }, c).max_rel_error == 0.0);
    CHECK(x(0, 0) == 3.0);
  }

  TEST_CASE("conv1d backward matches finite differences") {
    std::mt19937_64 rng(9);
    ConvKernel k(3, 2, 3);
    k.weights = random_normal(9, 2, 1.0, rng);
    k.bias = random_normal(1, 2, 1.0, rng);
    Matrix x = random_normal(6, 3, 1.0, rng);
    const Matrix w = random_normal(6, 2, 1.0, rng);
    const ConvGrads g = conv1d_backward(x, k, w);
    auto loss = [&] {
      const Matrix y = conv1d(x, k);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * w.values()[i];
      return s;
    };
    const GradTarget t[] = {{"x", &x, &g.dx}, {"w", &k.weights, &g.dweights}, {"b", &k.bias, &g.dbias}};
    CHECK(grad_check(loss, t).max_rel_error < 1e-6);
  }
}
