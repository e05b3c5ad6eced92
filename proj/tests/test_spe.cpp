#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "qean/spe.hpp"

using namespace qean;

TEST_SUITE("spe") {
  TEST_CASE("rope_rotate examples") {
    const RotarySchedule sched(8);
    const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
    CHECK(rope_rotate(x, 0, sched) == x);
    const auto quarter = RotarySchedule::with_angles({std::numbers::pi / 2});
    const auto y = rope_rotate(std::vector<double>{1, 0}, 1, quarter);
    CHECK(std::abs(y[0]) < 1e-15);
    CHECK(std::abs(y[1] - 1.0) < 1e-15);
  }

  TEST_CASE("rope_logits examples") {
    std::mt19937_64 rng(2);
    const Matrix q = random_normal(5, 6, 1.0, rng), k = random_normal(7, 6, 1.0, rng);
    const auto flat = RotarySchedule::with_angles({0.0, 0.0, 0.0});
    CHECK(max_abs_diff(rope_logits(q, k, flat), matmul_nt(q, k)) < 1e-14);
    const auto quarter = RotarySchedule::with_angles({std::numbers::pi / 2});
    const Matrix e = Matrix::from_rows({{1, 0}});
    CHECK(std::abs(rope_logits(e, e, quarter, 1, 0)(0, 0)) < 1e-15);
  }

  TEST_CASE("logits depend only on the relative offset") {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::size_t> len(1, 16), half(1, 16);
    for (int t = 0; t < 40; ++t) {
      const std::size_t n = len(rng), m = len(rng), d = 2 * half(rng);
      const RotarySchedule sched(d);
      const Matrix q = random_normal(n, d, 1.0, rng), k = random_normal(m, d, 1.0, rng);
      const Matrix base = rope_logits(q, k, sched);
      for (std::int64_t delta : {0, 7, 1000}) {
        const Matrix moved = rope_logits(q, k, sched, delta, delta);
        CHECK(max_abs_diff(base, moved) < 1e-10);
      }
    }
  }

  TEST_CASE("rotation and complex forms agree and preserve norms") {
    std::mt19937_64 rng(7);
    const RotarySchedule sched(16, 100.0);
    for (int t = 0; t < 50; ++t) {
      const Matrix x = random_normal(1, 16, 1.0, rng);
      const std::int64_t pos = t * 13 - 200;
      const auto a = rope_rotate(x.row(0), pos, sched);
      const auto b = rope_rotate_complex(x.row(0), pos, sched);
      double n0 = 0.0, n1 = 0.0;
      for (std::size_t i = 0; i < 16; ++i) {
        CHECK(std::abs(a[i] - b[i]) < 1e-14);
        n0 += x(0, i) * x(0, i);
        n1 += a[i] * a[i];
      }
      CHECK(std::abs(n0 - n1) < 1e-12);
    }
  }

  TEST_CASE("inverse rotation undoes rope_rotate_rows") {
    std::mt19937_64 rng(8);
    const RotarySchedule sched(10);
    const Matrix m = random_normal(9, 10, 1.0, rng);
    const Matrix back = rope_rotate_rows(rope_rotate_rows(m, sched, 3), sched, 3, true);
    CHECK(max_abs_diff(back, m) < 1e-14);
  }

  TEST_CASE("odd dimension is rejected") {
    CHECK_THROWS_AS(RotarySchedule(7), Error);
  }
}
