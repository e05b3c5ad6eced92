#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "qean/qra.hpp"

using namespace qean;

namespace {

void zero_angles(QRAParams& p) {
  for (ConvKernel* k : {&p.omega_q, &p.theta_q, &p.omega_k, &p.theta_k}) {
    k->weights.fill(0.0);
    k->bias.fill(0.0);
  }
}

}  // namespace

TEST_SUITE("qra") {
  TEST_CASE("frequency and phase ranges") {
    std::mt19937_64 rng(1);
    ConvKernel zk(8, 2, 3);
    const Matrix z = random_normal(6, 8, 1.0, rng);
    const FreqPhase zero = gen_freq_phase(z, zk, zk);
    CHECK(zero.omega == Matrix(6, 2));
    CHECK(zero.theta == Matrix(6, 2));
    ConvKernel k(8, 2, 3);
    k.weights = random_normal(24, 2, 10.0, rng);
    k.bias = random_normal(1, 2, 10.0, rng);
    const FreqPhase fp = gen_freq_phase(z, k, k);
    for (double v : fp.omega.values()) CHECK(v >= 0.0);
    for (double v : fp.theta.values()) CHECK(std::abs(v) < std::numbers::pi);
  }

  TEST_CASE("series_rotate examples") {
    std::mt19937_64 rng(2);
    const Matrix z = random_normal(3, 8, 1.0, rng);
    const FreqPhase still{Matrix(3, 2), Matrix(3, 2)};
    const auto out = series_rotate(z, still, position_vector(3), Axis::I);
    REQUIRE(out.size() == 2);
    for (const auto& s : out)
      for (std::size_t r = 0; r < 3; ++r) CHECK(std::vector<Quaternion>(s.step(r).begin(), s.step(r).end()) == quaternionize(z.row(r)));

    const Matrix one = Matrix::from_rows({{1, 0, 0, 0}});
    const FreqPhase quarter{Matrix(1, 1), Matrix::from_rows({{std::numbers::pi / 2}})};
    const Quaternion q = series_rotate(one, quarter, std::vector<double>{0.0}, Axis::I)[0].at(0, 0);
    CHECK(std::abs(q.e) < 1e-15);
    CHECK(std::abs(q.f - 1.0) < 1e-15);
  }

  TEST_CASE("rotary_similarity examples") {
    QuaternionSeries a(1, 1), b(1, 1);
    a.at(0, 0) = kUnitOne;
    b.at(0, 0) = kUnitOne;
    CHECK(rotary_similarity(std::vector{a}, std::vector{b}, 4)(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

    std::mt19937_64 rng(3);
    const Matrix q = random_normal(4, 12, 1.0, rng), k = random_normal(5, 12, 1.0, rng);
    const auto s = rotary_similarity(std::vector{QuaternionSeries::from_rows(q)},
                                     std::vector{QuaternionSeries::from_rows(k)}, 12);
    CHECK(max_abs_diff(s, (1.0 / std::sqrt(12.0)) * matmul_nt(q, k)) < 1e-12);
  }

  TEST_CASE("single key returns its value") {
    std::mt19937_64 rng(4);
    const QRAParams p = QRAParams::random(6, 8, 2, rng);
    const Matrix x = random_normal(1, 6, 1.0, rng), y = random_normal(1, 6, 1.0, rng);
    CHECK(max_abs_diff(qra_attention(x, y, p), matmul(y, p.w_v)) < 1e-14);
  }

  TEST_CASE("zero angles degenerate to scaled dot-product attention") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> len(1, 12), slots(1, 4);
    for (int t = 0; t < 120; ++t) {
      const std::size_t d_model = 3 + t % 7, d = 4 * slots(rng);
      QRAParams p = QRAParams::random(d_model, d, 1, rng);
      zero_angles(p);
      const Matrix x = random_normal(len(rng), d_model, 1.0, rng), y = random_normal(len(rng), d_model, 1.0, rng);
      const auto ref = oracle::attention(oracle::mul(oracle::rows_of(x), p.w_q),
                                         oracle::mul(oracle::rows_of(y), p.w_k),
                                         oracle::mul(oracle::rows_of(y), p.w_v));
      CHECK(oracle::max_abs_diff(ref, qra_attention(x, y, p)) < 1e-10);
    }
  }

  TEST_CASE("matches the straight-line oracle") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 60; ++t) {
      const std::size_t n = 1 + t % 4, m = 1 + (t / 4) % 4, d = 4 * (1 + t % 2), periods = 1 + t % 3;
      QRAParams p = QRAParams::random(5, d, periods, rng);
      for (ConvKernel* k : {&p.omega_q, &p.theta_q, &p.omega_k, &p.theta_k}) {
        k->weights = random_normal(k->weights.rows(), k->weights.cols(), 0.8, rng);
        k->bias = random_normal(1, k->bias.cols(), 0.8, rng);
      }
      const Matrix x = random_normal(n, 5, 1.0, rng), y = random_normal(m, 5, 1.0, rng);
      CHECK(oracle::max_abs_diff(oracle::qra(x, y, p, 2), qra_attention(x, y, p)) < 1e-10);
      CHECK(oracle::max_abs_diff(oracle::qra(x, y, p, 1), qra_attention(x, y, p, {Axis::I, true})) < 1e-10);
    }
  }

  TEST_CASE("multi-head composition") {
    std::mt19937_64 rng(7);
    MultiHeadQRAParams one = MultiHeadQRAParams::random(8, 1, 2, rng);
    one.w_o = Matrix::identity(8);
    const Matrix x = random_normal(3, 8, 1.0, rng), y = random_normal(4, 8, 1.0, rng);
    CHECK(max_abs_diff(multi_head_qra(x, y, one), qra_attention(x, y, one.heads[0])) < 1e-14);

    MultiHeadQRAParams two = MultiHeadQRAParams::random(8, 2, 2, rng);
    const Matrix joined = multi_head_qra(x, y, two);
    Matrix concat(3, 8);
    concat.set_col_block(0, qra_attention(x, y, two.heads[0]));
    concat.set_col_block(4, qra_attention(x, y, two.heads[1]));
    CHECK(max_abs_diff(joined, matmul(concat, two.w_o)) < 1e-12);

    try {
      MultiHeadQRAParams::random(24, 4, 1, rng);
      FAIL("expected HeadDimNotQuaternion");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::HeadDimNotQuaternion);
    }
  }

  TEST_CASE("gradient of a full layer") {
    std::mt19937_64 rng(8);
    QRAParams p = QRAParams::random(6, 8, 2, rng);
    Matrix x = random_normal(4, 6, 1.0, rng), y = random_normal(5, 6, 1.0, rng);
    const Matrix w = random_normal(4, 8, 1.0, rng);
    QRACache cache;
    const Matrix h = qra_attention(x, y, p, {}, &cache);
    Matrix dh = w;
    QRAParams g = QRAParams::zeros(6, 8, 2);
    const InputGrads in = qra_attention_backward(cache, p, dh, g);
    auto loss = [&] {
      const Matrix o = qra_attention(x, y, p);
      double s = 0.0;
      for (std::size_t i = 0; i < o.size(); ++i) s += o.values()[i] * w.values()[i];
      return s;
    };
    const GradTarget t[] = {{"x", &x, &in.dx},       {"y", &y, &in.dy},          {"w_q", &p.w_q, &g.w_q},
                            {"w_k", &p.w_k, &g.w_k}, {"w_v", &p.w_v, &g.w_v},
                            {"omega_q", &p.omega_q.weights, &g.omega_q.weights},
                            {"theta_k", &p.theta_k.weights, &g.theta_k.weights},
                            {"theta_q.b", &p.theta_q.bias, &g.theta_q.bias}};
    const GradReport r = grad_check(loss, t);
    CHECK(r.max_rel_error < 1e-4);
  }
}
