#include "qean/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <tuple>

#include "qean/features.hpp"
#include "qean/io.hpp"
#include "qean/metrics.hpp"
#include "qean/model.hpp"
#include "qean/qra.hpp"
#include "qean/quaternion.hpp"
#include "qean/run_config.hpp"
#include "qean/spe.hpp"
#include "qean/training.hpp"

namespace qean {

bool SuiteReport::pass() const noexcept { return failures() == 0; }

std::size_t SuiteReport::failures() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(checks.begin(), checks.end(), [](const CheckResult& c) { return !c.pass; }));
}

std::string format_check(const CheckResult& c) {
  char buf[64];
  std::string out = c.pass ? "PASS  " : "FAIL  ";
  out += c.name;
  std::snprintf(buf, sizeof buf, "  measured=%.3g  tol=%.3g", c.measured, c.tol);
  out += buf;
  if (!c.detail.empty()) out += "  (" + c.detail + ")";
  return out;
}

namespace {

constexpr double kPi = std::numbers::pi;

class Checks {
 public:
  Checks(std::string suite, std::ostream& log) : suite_(std::move(suite)), log_(log) {}

  /// Passes when err ≤ tol; NaN fails.
  void within(const std::string& name, double err, double tol, std::string detail = {}) {
    record({suite_ + "." + name, err, tol, err <= tol, std::move(detail)});
  }
  void truth(const std::string& name, bool ok, std::string detail = {}) {
    record({suite_ + "." + name, ok ? 0.0 : 1.0, 0.0, ok, std::move(detail)});
  }
  /// Runs `body`; a thrown exception fails the check with its message.
  void guarded(const std::string& name, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      record({suite_ + "." + name, std::numeric_limits<double>::quiet_NaN(), 0.0, false, e.what()});
    }
  }

  SuiteReport finish() {
    const std::size_t want = expected_check_count(suite_);
    if (report_.checks.size() != want)
      record({suite_ + ".check_count", static_cast<double>(report_.checks.size()),
              static_cast<double>(want), false,
              "expected " + std::to_string(want) + " checks"});
    return std::move(report_);
  }

 private:
  void record(CheckResult c) {
    log_ << format_check(c) << '\n';
    log_.flush();
    report_.checks.push_back(std::move(c));
  }

  std::string suite_;
  std::ostream& log_;
  SuiteReport report_{suite_, {}};
};

double qdiff(const Quaternion& a, const Quaternion& b) {
  return std::max({std::abs(a.e - b.e), std::abs(a.f - b.f), std::abs(a.g - b.g), std::abs(a.h - b.h)});
}

Quaternion random_quaternion(std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  return {n(rng), n(rng), n(rng), n(rng)};
}

Quaternion random_unit(std::mt19937_64& rng) {
  const Quaternion q = random_quaternion(rng);
  return q_scale(1.0 / q_norm(q), q);
}

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double sum_product(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

std::string grad_detail(const GradReport& r) {
  std::string worst;
  double e = -1.0;
  std::size_t checked = 0;
  for (const auto& entry : r.entries) {
    checked += entry.checked;
    if (entry.max_rel_error > e) {
      e = entry.max_rel_error;
      worst = entry.name;
    }
  }
  return std::to_string(checked) + " entries, worst " + worst;
}

// ---------------------------------------------------------------- algebra

SuiteReport suite_algebra(std::ostream& log) {
  Checks c("algebra", log);
  std::mt19937_64 rng(101);

  c.guarded("matmul_associativity", [&] {
    double err = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t a = uniform(rng, 1, 8), b = uniform(rng, 1, 8), d = uniform(rng, 1, 8),
                        e = uniform(rng, 1, 8);
      const Matrix x = random_normal(a, b, 1.0, rng), y = random_normal(b, d, 1.0, rng),
                   z = random_normal(d, e, 1.0, rng);
      err = std::max(err, max_abs_diff(matmul(matmul(x, y), z), matmul(x, matmul(y, z))));
    }
    c.within("matmul_associativity", err, 1e-10);
  });

  c.guarded("kernels_match_serial", [&] {
    double err = 0.0;
    const Matrix a = random_normal(300, 200, 1.0, rng), b = random_normal(200, 150, 1.0, rng);
    const Matrix bt = random_normal(150, 200, 1.0, rng), at = random_normal(200, 300, 1.0, rng);
    err = std::max(err, max_abs_diff(matmul(a, b), serial::matmul(a, b)));
    err = std::max(err, max_abs_diff(matmul_nt(a, bt), serial::matmul_nt(a, bt)));
    const Matrix c2 = random_normal(300, 150, 1.0, rng);
    err = std::max(err, max_abs_diff(matmul_tn(a, c2), serial::matmul_tn(a, c2)));
    err = std::max(err, max_abs_diff(matmul(at, a), serial::matmul(at, a)));
    err = std::max(err, max_abs_diff(softmax_rows(a), serial::softmax_rows(a)));
    ConvKernel k(200, 16, 3);
    k.weights = random_normal(600, 16, 0.1, rng);
    k.bias = random_normal(1, 16, 0.1, rng);
    err = std::max(err, max_abs_diff(conv1d(a, k), serial::conv1d(a, k)));
    c.within("kernels_match_serial", err, 0.0, "OpenMP kernels vs serial references, bitwise");
  });

  c.guarded("softmax_rows_sum_to_one", [&] {
    const Matrix s = softmax_rows(random_normal(20, 17, 5.0, rng));
    double err = 0.0;
    for (std::size_t r = 0; r < s.rows(); ++r) {
      double sum = 0.0;
      for (double v : s.row(r)) sum += v;
      err = std::max(err, std::abs(sum - 1.0));
    }
    c.within("softmax_rows_sum_to_one", err, 1e-12);
  });

  c.guarded("softmax_shift_invariance", [&] {
    const Matrix x = random_normal(20, 17, 3.0, rng);
    Matrix shifted = x;
    std::normal_distribution<double> n(0.0, 50.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double s = n(rng);
      for (double& v : shifted.row(r)) v += s;
    }
    c.within("softmax_shift_invariance", max_abs_diff(softmax_rows(x), softmax_rows(shifted)), 1e-12);
  });

  c.guarded("conv1d_linearity", [&] {
    ConvKernel k(5, 3, 3);
    k.weights = random_normal(15, 3, 1.0, rng);
    const Matrix x = random_normal(12, 5, 1.0, rng), y = random_normal(12, 5, 1.0, rng);
    const double a = 0.7, b = -1.3;
    const Matrix lhs = conv1d(a * x + b * y, k);
    const Matrix rhs = a * conv1d(x, k) + b * conv1d(y, k);
    c.within("conv1d_linearity", max_abs_diff(lhs, rhs), 1e-12);
  });

  c.guarded("sym_sqrt_reconstruction", [&] {
    double err = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = uniform(rng, 2, 10);
      // S = U·diag(λ)·Uᵀ with λ spanning [1e-3, 1e2]
      Matrix basis = random_normal(n, n, 1.0, rng);
      // Gram-Schmidt for an orthonormal basis
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
          double d = 0.0;
          for (std::size_t r = 0; r < n; ++r) d += basis(r, i) * basis(r, j);
          for (std::size_t r = 0; r < n; ++r) basis(r, i) -= d * basis(r, j);
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < n; ++r) norm += basis(r, i) * basis(r, i);
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < n; ++r) basis(r, i) /= norm;
      }
      Matrix scaled = basis;
      for (std::size_t i = 0; i < n; ++i) {
        const double lambda = std::pow(10.0, -3.0 + 5.0 * static_cast<double>(i) / static_cast<double>(n - 1));
        for (std::size_t r = 0; r < n; ++r) scaled(r, i) *= lambda;
      }
      Matrix s = matmul_nt(scaled, basis);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) s(i, j) = s(j, i);
      const double eps = 1e-6;
      const Matrix root = sym_sqrt(s, eps);
      Matrix target = s;
      for (std::size_t i = 0; i < n; ++i) target(i, i) += eps;
      err = std::max(err, max_abs_diff(matmul(root, root), target));
    }
    c.within("sym_sqrt_reconstruction", err, 1e-8, "condition number 1e5");
  });

  c.guarded("basis_table", [&] {
    const Quaternion one = kUnitOne, i = kUnitI, j = kUnitJ, k = kUnitK;
    struct Row {
      Quaternion a, b, want;
    };
    const Row table[] = {
        {i, j, k},           {j, k, i},           {k, i, j},
        {j, i, q_neg(k)},    {k, j, q_neg(i)},    {i, k, q_neg(j)},
        {i, i, q_neg(one)},  {j, j, q_neg(one)},  {k, k, q_neg(one)},
    };
    double err = 0.0;
    std::string bad;
    for (const Row& r : table) {
      const double e = qdiff(hamilton(r.a, r.b), r.want);
      if (e > 0.0 && bad.empty())
        bad = "product " + std::to_string(&r - table) + " of the basis table is wrong";
      err = std::max(err, e);
    }
    c.within("basis_table", err, 0.0, bad);
  });

  c.guarded("identity_element", [&] {
    double err = 0.0;
    for (int t = 0; t < 100; ++t) {
      const Quaternion q = random_quaternion(rng);
      err = std::max({err, qdiff(hamilton(kUnitOne, q), q), qdiff(hamilton(q, kUnitOne), q)});
    }
    c.within("identity_element", err, 0.0);
  });

  c.guarded("non_commutativity", [&] {
    const double err = qdiff(hamilton(kUnitI, kUnitJ), q_neg(hamilton(kUnitJ, kUnitI)));
    c.within("non_commutativity", err, 0.0, "i⊗j = −(j⊗i)");
  });

  c.guarded("associativity", [&] {
    double err = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const Quaternion q = random_quaternion(rng), r = random_quaternion(rng), s = random_quaternion(rng);
      err = std::max(err, qdiff(hamilton(hamilton(q, r), s), hamilton(q, hamilton(r, s))));
    }
    c.within("associativity", err, 1e-12);
  });

  c.guarded("norm_multiplicativity", [&] {
    double err = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const Quaternion q = random_quaternion(rng), r = random_quaternion(rng);
      err = std::max(err, std::abs(q_norm(hamilton(q, r)) - q_norm(q) * q_norm(r)));
    }
    c.within("norm_multiplicativity", err, 1e-10);
  });

  c.guarded("conjugate_anti_homomorphism", [&] {
    double err = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const Quaternion q = random_quaternion(rng), r = random_quaternion(rng);
      err = std::max(err, qdiff(q_conj(hamilton(q, r)), hamilton(q_conj(r), q_conj(q))));
    }
    c.within("conjugate_anti_homomorphism", err, 1e-12);
  });

  c.guarded("real_part_dot_identity", [&] {
    double err = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const Quaternion q = random_quaternion(rng), r = random_quaternion(rng);
      const double dot = q.e * r.e + q.f * r.f + q.g * r.g + q.h * r.h;
      err = std::max(err, std::abs(hamilton(q, q_conj(r)).e - dot));
    }
    c.within("real_part_dot_identity", err, 1e-12);
  });

  c.guarded("quaternionize_prefix", [&] {
    bool ok = true;
    for (std::size_t n = 4; n <= 23; ++n) {
      std::vector<double> v(n);
      for (double& x : v) x = std::normal_distribution<double>(0.0, 1.0)(rng);
      const std::vector<Quaternion> q = quaternionize(v);
      std::vector<double> back(4 * q.size());
      flatten(q, back);
      ok = ok && q.size() == n / 4 && std::equal(back.begin(), back.end(), v.begin());
    }
    c.truth("quaternionize_prefix", ok, "flatten(quaternionize(v)) is the 4⌊n/4⌋ prefix of v");
  });

  c.guarded("rotmat_roundtrip", [&] {
    double err = 0.0;
    for (int t = 0; t < 100; ++t) {
      const Quaternion q = random_unit(rng);
      const Quaternion back = rotmat_to_quat(quat_to_rotmat(q));
      err = std::max(err, std::min(qdiff(back, q), qdiff(back, q_neg(q))));
    }
    c.within("rotmat_roundtrip", err, 1e-10, "up to sign, 100 random unit quaternions");
  });

  return c.finish();
}

// ---------------------------------------------------------------- spe

SuiteReport suite_spe(std::ostream& log) {
  Checks c("spe", log);
  std::mt19937_64 rng(202);

  c.guarded("relative_shift_invariance", [&] {
    double err = 0.0;
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = uniform(rng, 1, 16), m = uniform(rng, 1, 16), d = 2 * uniform(rng, 1, 16);
      const RotarySchedule sched(d);
      const Matrix q = random_normal(n, d, 1.0, rng), k = random_normal(m, d, 1.0, rng);
      const Matrix base = rope_logits(q, k, sched, 0, 0);
      for (std::int64_t delta : {7, 1000})
        err = std::max(err, max_abs_diff(base, rope_logits(q, k, sched, delta, delta)));
    }
    c.within("relative_shift_invariance", err, 1e-10, "delta in {0, 7, 1000}");
  });

  c.guarded("isometry", [&] {
    double err = 0.0;
    for (int t = 0; t < 200; ++t) {
      const std::size_t d = 2 * uniform(rng, 1, 16);
      const RotarySchedule sched(d);
      const Matrix x = random_normal(1, d, 1.0, rng);
      const auto pos = static_cast<std::int64_t>(uniform(rng, 0, 5000));
      const std::vector<double> y = rope_rotate(x.row(0), pos, sched);
      double nx = 0.0, ny = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        nx += x(0, i) * x(0, i);
        ny += y[i] * y[i];
      }
      err = std::max(err, std::abs(std::sqrt(nx) - std::sqrt(ny)));
    }
    c.within("isometry", err, 1e-12);
  });

  c.guarded("complex_matches_rotation", [&] {
    double err = 0.0;
    for (int t = 0; t < 200; ++t) {
      const std::size_t d = 2 * uniform(rng, 1, 16);
      const RotarySchedule sched(d);
      const Matrix x = random_normal(1, d, 1.0, rng);
      const auto pos = static_cast<std::int64_t>(uniform(rng, 0, 1000));
      const std::vector<double> a = rope_rotate(x.row(0), pos, sched);
      const std::vector<double> b = rope_rotate_complex(x.row(0), pos, sched);
      for (std::size_t i = 0; i < d; ++i) err = std::max(err, std::abs(a[i] - b[i]));
    }
    c.within("complex_matches_rotation", err, 1e-14);
  });

  c.guarded("zero_angle_degeneracy", [&] {
    const std::size_t d = 12;
    const RotarySchedule sched = RotarySchedule(d).with_angles(std::vector<double>(d / 2, 0.0));
    const Matrix q = random_normal(9, d, 1.0, rng), k = random_normal(7, d, 1.0, rng);
    c.within("zero_angle_degeneracy", max_abs_diff(rope_logits(q, k, sched, 3, 11), matmul_nt(q, k)), 0.0,
             "exact equality with Q·Kᵀ");
  });

  return c.finish();
}

// ---------------------------------------------------------------- qra

// Straight-line evaluation of one quaternion rotary attention head, written
// without the library's quaternion, convolution or matrix helpers.
Matrix qra_oracle(const Matrix& x, const Matrix& y, const QRAParams& p, bool same_axis) {
  const std::size_t n_q = x.rows(), n_k = y.rows(), dm = p.d_model, d = p.d_attn, periods = p.periods;
  auto project = [&](const Matrix& in, const Matrix& w) {
    Matrix out(in.rows(), d);
    for (std::size_t r = 0; r < in.rows(); ++r)
      for (std::size_t c = 0; c < d; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < dm; ++i) s += in(r, i) * w(i, c);
        out(r, c) = s;
      }
    return out;
  };
  const Matrix q = project(x, p.w_q), k = project(y, p.w_k), v = project(y, p.w_v);
  auto conv_at = [&](const Matrix& z, const ConvKernel& ker, std::size_t t, std::size_t out) {
    double s = ker.bias(0, out);
    const auto half = static_cast<std::ptrdiff_t>(ker.width / 2);
    for (std::size_t tap = 0; tap < ker.width; ++tap) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(tap) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(z.rows())) continue;
      for (std::size_t ch = 0; ch < z.cols(); ++ch)
        s += ker.weights(tap * z.cols() + ch, out) * z(static_cast<std::size_t>(src), ch);
    }
    return s;
  };
  using Q4 = std::array<double, 4>;
  auto mul = [](const Q4& a, const Q4& b) {
    return Q4{a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
  };
  auto angle = [&](const Matrix& z, const ConvKernel& om, const ConvKernel& th, std::size_t t,
                   std::size_t per, std::size_t len) {
    const double omega = std::max(0.0, conv_at(z, om, t, per));
    const double theta = kPi * std::tanh(conv_at(z, th, t, per));
    return 2.0 * kPi * omega * static_cast<double>(t) / static_cast<double>(len) + theta;
  };
  Matrix sim(n_q, n_k);
  for (std::size_t a = 0; a < n_q; ++a)
    for (std::size_t b = 0; b < n_k; ++b) {
      double s = 0.0;
      for (std::size_t per = 0; per < periods; ++per) {
        const double aq = angle(q, p.omega_q, p.theta_q, a, per, n_q);
        const double ak = angle(k, p.omega_k, p.theta_k, b, per, n_k);
        const Q4 uq{std::cos(aq), std::sin(aq), 0.0, 0.0};
        const Q4 uk = same_axis ? Q4{std::cos(ak), std::sin(ak), 0.0, 0.0}
                                : Q4{std::cos(ak), 0.0, std::sin(ak), 0.0};
        for (std::size_t slot = 0; slot < d / 4; ++slot) {
          const Q4 qs{q(a, 4 * slot), q(a, 4 * slot + 1), q(a, 4 * slot + 2), q(a, 4 * slot + 3)};
          const Q4 ks{k(b, 4 * slot), k(b, 4 * slot + 1), k(b, 4 * slot + 2), k(b, 4 * slot + 3)};
          const Q4 phi = mul(qs, uq);
          const Q4 psi = mul(ks, uk);
          s += mul(phi, Q4{psi[0], -psi[1], -psi[2], -psi[3]})[0];
        }
      }
      sim(a, b) = s / (static_cast<double>(periods) * std::sqrt(static_cast<double>(d)));
    }
  Matrix h(n_q, d);
  for (std::size_t a = 0; a < n_q; ++a) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < n_k; ++b) mx = std::max(mx, sim(a, b));
    std::vector<double> w(n_k);
    double z = 0.0;
    for (std::size_t b = 0; b < n_k; ++b) z += w[b] = std::exp(sim(a, b) - mx);
    for (std::size_t b = 0; b < n_k; ++b)
      for (std::size_t c = 0; c < d; ++c) h(a, c) += w[b] / z * v(b, c);
  }
  return h;
}

SuiteReport suite_qra(std::ostream& log) {
  Checks c("qra", log);
  std::mt19937_64 rng(303);

  c.guarded("canonical_degeneracy", [&] {
    double err = 0.0;
    for (int t = 0; t < 120; ++t) {
      const std::size_t dm = uniform(rng, 1, 12), d = 4 * uniform(rng, 1, 4);
      const std::size_t n = uniform(rng, 1, 10), m = uniform(rng, 1, 10);
      QRAParams p = QRAParams::random(dm, d, 1, rng);
      for (ConvKernel* k : {&p.omega_q, &p.theta_q, &p.omega_k, &p.theta_k}) {
        k->weights.fill(0.0);
        k->bias.fill(0.0);
      }
      const Matrix x = random_normal(n, dm, 1.0, rng), y = random_normal(m, dm, 1.0, rng);
      const Matrix h = qra_attention(x, y, p);
      const Matrix ref = scaled_dot_attention(matmul(x, p.w_q), matmul(y, p.w_k), matmul(y, p.w_v));
      err = std::max(err, max_abs_diff(h, ref));
    }
    c.within("canonical_degeneracy", err, 1e-10, "P=1, omega=theta=0, 120 random instances");
  });

  c.guarded("attention_rows_sum_to_one", [&] {
    QRAParams p = QRAParams::random(10, 8, 3, rng);
    QRACache cache;
    qra_attention(random_normal(9, 10, 1.0, rng), random_normal(11, 10, 1.0, rng), p, {}, &cache);
    double err = 0.0;
    for (std::size_t r = 0; r < cache.attn.rows(); ++r) {
      double s = 0.0;
      for (double v : cache.attn.row(r)) s += v;
      err = std::max(err, std::abs(s - 1.0));
    }
    c.within("attention_rows_sum_to_one", err, 1e-12);
  });

  c.guarded("rotation_isometry", [&] {
    const Matrix z = random_normal(13, 12, 1.0, rng);
    ConvKernel om(12, 3, 3), th(12, 3, 3);
    om.weights = random_normal(36, 3, 1.0, rng);
    th.weights = random_normal(36, 3, 1.0, rng);
    const FreqPhase fp = gen_freq_phase(z, om, th);
    const std::vector<double> pos = position_vector(z.rows());
    double err = 0.0;
    for (Axis axis : {Axis::I, Axis::J, Axis::K}) {
      const auto rotated = series_rotate(z, fp, pos, axis);
      const QuaternionSeries orig = QuaternionSeries::from_rows(z);
      for (const QuaternionSeries& s : rotated)
        for (std::size_t n = 0; n < z.rows(); ++n)
          for (std::size_t slot = 0; slot < 3; ++slot)
            err = std::max(err, std::abs(q_norm(s.at(n, slot)) - q_norm(orig.at(n, slot))));
    }
    c.within("rotation_isometry", err, 1e-12);
  });

  c.guarded("brute_force_oracle", [&] {
    double err = 0.0;
    for (int t = 0; t < 200; ++t) {
      const std::size_t dm = uniform(rng, 1, 6), d = 4 * uniform(rng, 1, 2), periods = uniform(rng, 1, 3);
      const std::size_t n = uniform(rng, 1, 4), m = uniform(rng, 1, 4);
      const QRAParams p = QRAParams::random(dm, d, periods, rng);
      const Matrix x = random_normal(n, dm, 1.0, rng), y = random_normal(m, dm, 1.0, rng);
      const bool same = t % 2 == 1;
      const Matrix h = qra_attention(x, y, p, {same ? Axis::I : Axis::J, true});
      err = std::max(err, max_abs_diff(h, qra_oracle(x, y, p, same)));
    }
    c.within("brute_force_oracle", err, 1e-10, "N,M<=4, d<=8, P<=3, 200 instances");
  });

  c.guarded("output_norm_bound", [&] {
    double excess = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < 50; ++t) {
      const QRAParams p = QRAParams::random(6, 8, 2, rng);
      const Matrix x = random_normal(7, 6, 1.0, rng), y = random_normal(5, 6, 1.0, rng);
      const Matrix h = qra_attention(x, y, p);
      const Matrix v = matmul(y, p.w_v);
      double vmax = 0.0;
      for (std::size_t r = 0; r < v.rows(); ++r) {
        double s = 0.0;
        for (double e : v.row(r)) s += e * e;
        vmax = std::max(vmax, std::sqrt(s));
      }
      for (std::size_t r = 0; r < h.rows(); ++r) {
        double s = 0.0;
        for (double e : h.row(r)) s += e * e;
        excess = std::max(excess, std::sqrt(s) - vmax);
      }
    }
    c.within("output_norm_bound", excess, 1e-12, "max_n ‖H[n]‖ − max_m ‖V[m]‖");
  });

  return c.finish();
}

// ---------------------------------------------------------------- grad

std::vector<GradTarget> conv_targets(const std::string& prefix, ConvKernel& k, const ConvKernel& g) {
  return {{prefix + ".weights", &k.weights, &g.weights}, {prefix + ".bias", &k.bias, &g.bias}};
}

std::vector<GradTarget> qra_targets(const std::string& prefix, QRAParams& p, const QRAParams& g) {
  std::vector<GradTarget> t{{prefix + "w_q", &p.w_q, &g.w_q},
                            {prefix + "w_k", &p.w_k, &g.w_k},
                            {prefix + "w_v", &p.w_v, &g.w_v}};
  for (auto [name, k, gk] : {std::tuple{"omega_q", &p.omega_q, &g.omega_q},
                             std::tuple{"theta_q", &p.theta_q, &g.theta_q},
                             std::tuple{"omega_k", &p.omega_k, &g.omega_k},
                             std::tuple{"theta_k", &p.theta_k, &g.theta_k}})
    for (GradTarget& x : conv_targets(prefix + name, *k, *gk)) t.push_back(x);
  return t;
}

SuiteReport suite_grad(std::ostream& log) {
  Checks c("grad", log);
  std::mt19937_64 rng(404);
  constexpr double h = 1e-5, tol = 1e-4;

  auto report = [&](const std::string& name, const GradReport& r) {
    c.within(name, r.max_rel_error, tol, grad_detail(r));
  };

  c.guarded("conv1d", [&] {
    Matrix x = random_normal(9, 4, 1.0, rng);
    ConvKernel k(4, 3, 3);
    k.weights = random_normal(12, 3, 0.5, rng);
    k.bias = random_normal(1, 3, 0.5, rng);
    const Matrix w = random_normal(9, 3, 1.0, rng);
    const ConvGrads g = conv1d_backward(x, k, w);
    std::vector<GradTarget> t{{"x", &x, &g.dx}, {"weights", &k.weights, &g.dweights}, {"bias", &k.bias, &g.dbias}};
    report("conv1d", grad_check([&] { return sum_product(conv1d(x, k), w); }, t, h, tol));
  });

  c.guarded("softmax_rows", [&] {
    Matrix x = random_normal(6, 7, 1.0, rng);
    const Matrix w = random_normal(6, 7, 1.0, rng);
    const Matrix g = softmax_rows_backward(softmax_rows(x), w);
    std::vector<GradTarget> t{{"x", &x, &g}};
    report("softmax_rows", grad_check([&] { return sum_product(softmax_rows(x), w); }, t, h, tol));
  });

  c.guarded("rope_logits", [&] {
    const RotarySchedule sched(8);
    Matrix q = random_normal(5, 8, 1.0, rng), k = random_normal(6, 8, 1.0, rng);
    const Matrix w = random_normal(5, 6, 1.0, rng);
    const Matrix qr = rope_rotate_rows(q, sched, 3), kr = rope_rotate_rows(k, sched, 3);
    const Matrix dq = rope_rotate_rows(matmul(w, kr), sched, 3, true);
    const Matrix dk = rope_rotate_rows(matmul_tn(w, qr), sched, 3, true);
    std::vector<GradTarget> t{{"q", &q, &dq}, {"k", &k, &dk}};
    report("rope_logits", grad_check([&] { return sum_product(rope_logits(q, k, sched, 3, 3), w); }, t, h, tol));
  });

  for (const bool same : {false, true}) {
    const std::string name = same ? "qra_attention_same_axis" : "qra_attention";
    c.guarded(name, [&] {
      QRAParams p = QRAParams::random(6, 8, 2, rng);
      Matrix x = random_normal(5, 6, 1.0, rng), y = random_normal(7, 6, 1.0, rng);
      const Matrix w = random_normal(5, 8, 1.0, rng);
      const QRAOptions opt{same ? Axis::I : Axis::J, true};
      QRACache cache;
      qra_attention(x, y, p, opt, &cache);
      QRAParams g = QRAParams::zeros(6, 8, 2);
      const InputGrads in = qra_attention_backward(cache, p, w, g);
      std::vector<GradTarget> t = qra_targets("", p, g);
      t.push_back({"x", &x, &in.dx});
      t.push_back({"y", &y, &in.dy});
      report(name, grad_check([&] { return sum_product(qra_attention(x, y, p, opt), w); }, t, h, tol));
    });
  }

  c.guarded("multi_head_qra", [&] {
    MultiHeadQRAParams p = MultiHeadQRAParams::random(16, 2, 2, rng);
    Matrix x = random_normal(4, 16, 1.0, rng), y = random_normal(6, 16, 1.0, rng);
    const Matrix w = random_normal(4, 16, 1.0, rng);
    MultiHeadQRACache cache;
    multi_head_qra(x, y, p, {}, &cache);
    MultiHeadQRAParams g = MultiHeadQRAParams::zeros_like(p);
    const InputGrads in = multi_head_qra_backward(cache, p, w, g);
    std::vector<GradTarget> t;
    for (std::size_t i = 0; i < p.heads.size(); ++i)
      for (GradTarget& e : qra_targets("head" + std::to_string(i) + ".", p.heads[i], g.heads[i])) t.push_back(e);
    t.push_back({"w_o", &p.w_o, &g.w_o});
    t.push_back({"x", &x, &in.dx});
    t.push_back({"y", &y, &in.dy});
    report("multi_head_qra", grad_check([&] { return sum_product(multi_head_qra(x, y, p), w); }, t, h, tol));
  });

  c.guarded("l2_loss", [&] {
    Matrix pred = random_normal(5, 219, 1.0, rng);
    const Matrix target = random_normal(5, 219, 1.0, rng);
    const Matrix g = l2_loss_grad(pred, target);
    std::vector<GradTarget> t{{"pred", &pred, &g}};
    report("l2_loss", grad_check([&] { return l2_loss(pred, target); }, t, h, tol));
  });

  // End-to-end: the target sits close to the current prediction, which keeps
  // the loss small next to its gradient and the difference quotient clean.
  auto model_check = [&](const std::string& name, const ModelConfig& config, std::size_t per_tensor) {
    c.guarded(name, [&] {
      ModelWeights w = init_weights(config, 7);
      const Matrix seed = random_normal(config.seed_motion_frames, kMotionChannels, 0.5, rng);
      const Matrix audio = random_normal(config.audio_frames, kAudioChannels, 0.5, rng);
      Matrix target = predict(seed, audio, w, config);
      target += random_normal(target.rows(), target.cols(), 0.01, rng);
      ModelCachePtr cache;
      const Matrix pred = forward(seed, audio, w, config, {}, cache);
      ModelWeights g = zeros_like(w);
      backward(*cache, l2_loss_grad(pred, target), w, config, g);
      auto wt = named_tensors(w);
      const auto gt = named_tensors(std::as_const(g));
      std::vector<GradTarget> t;
      for (std::size_t i = 0; i < wt.size(); ++i) t.push_back({wt[i].name, wt[i].tensor, gt[i].tensor});
      report(name, grad_check([&] { return l2_loss(predict(seed, audio, w, config), target); }, t, h, tol,
                              per_tensor, 11));
    });
  };
  ModelConfig small;
  small.d_model = 16;
  small.heads = 2;
  small.d_ff = 16;
  small.encoder_layers = 1;
  small.seed_motion_frames = 6;
  small.audio_frames = 8;
  small.future_frames = 2;
  model_check("model_small_every_entry", small, 0);
  model_check("model_desk_sampled", ModelConfig::desk(), 40);

  return c.finish();
}

// ---------------------------------------------------------------- metrics

SuiteReport suite_metrics(std::ostream& log) {
  Checks c("metrics", log);
  std::mt19937_64 rng(505);

  const Matrix a = random_normal(40, 6, 1.0, rng), b = random_normal(30, 6, 2.0, rng);

  c.guarded("fid_self_zero", [&] { c.within("fid_self_zero", std::abs(fid(a, a)), 1e-8); });
  c.guarded("fid_symmetry", [&] { c.within("fid_symmetry", std::abs(fid(a, b) - fid(b, a)), 1e-8); });

  c.guarded("fid_1d_closed_form", [&] {
    Matrix x(20, 1), y(20, 1);
    for (std::size_t i = 0; i < 20; ++i) x(i, 0) = std::normal_distribution<double>(0.0, 1.0)(rng);
    double mean = 0.0;
    for (std::size_t i = 0; i < 20; ++i) mean += x(i, 0) / 20.0;
    const double m = 1.75;
    for (std::size_t i = 0; i < 20; ++i) {
      x(i, 0) -= mean;
      y(i, 0) = x(i, 0) + m;
    }
    c.within("fid_1d_closed_form", std::abs(fid(x, y) - m * m), 1e-8, "means 0 and m = 1.75");
  });

  Matrix shift(1, 6);
  for (double& v : shift.values()) v = std::normal_distribution<double>(0.0, 1.0)(rng);
  auto shifted = [&](const Matrix& m) {
    Matrix out = m;
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t k = 0; k < m.cols(); ++k) out(r, k) += shift(0, k);
    return out;
  };

  c.guarded("fid_common_shift", [&] {
    c.within("fid_common_shift", std::abs(fid(shifted(a), shifted(b)) - fid(a, b)), 1e-8);
  });

  c.guarded("fid_one_sided_shift", [&] {
    double sq = 0.0;
    for (double v : shift.values()) sq += v * v;
    c.within("fid_one_sided_shift", std::abs(fid(a, shifted(a)) - sq), 1e-8, "equal covariances gain ‖v‖²");
  });

  c.guarded("diversity_translation", [&] {
    c.within("diversity_translation", std::abs(diversity(shifted(b)) - diversity(b)), 1e-10);
  });

  c.guarded("diversity_orthogonal", [&] {
    const Matrix g = random_normal(6, 6, 1.0, rng);
    Matrix q = g;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        double d = 0.0;
        for (std::size_t r = 0; r < 6; ++r) d += q(r, i) * q(r, j);
        for (std::size_t r = 0; r < 6; ++r) q(r, i) -= d * q(r, j);
      }
      double n = 0.0;
      for (std::size_t r = 0; r < 6; ++r) n += q(r, i) * q(r, i);
      for (std::size_t r = 0; r < 6; ++r) q(r, i) /= std::sqrt(n);
    }
    c.within("diversity_orthogonal", std::abs(diversity(matmul(b, q)) - diversity(b)), 1e-10);
  });

  c.guarded("beat_align_hand_case", [&] {
    const double got = beat_align({{10, 50}}, {{12, 47}}, 3.0);
    const double oracle = (std::exp(-4.0 / 18.0) + std::exp(-9.0 / 18.0)) / 2.0;
    c.within("beat_align_hand_case", std::abs(got - oracle), 1e-5, "{10,50} vs {12,47}, oracle 0.703634");
  });

  c.guarded("beat_align_self", [&] {
    double err = 0.0;
    for (int t = 0; t < 50; ++t) {
      BeatTimeline x;
      std::int64_t f = 0;
      for (std::size_t i = 0, n = uniform(rng, 1, 20); i < n; ++i) x.frames.push_back(f += 1 + static_cast<std::int64_t>(uniform(rng, 0, 30)));
      err = std::max(err, std::abs(beat_align(x, x) - 1.0));
    }
    c.within("beat_align_self", err, 0.0);
  });

  c.guarded("beat_align_monotone", [&] {
    bool ok = true;
    for (int t = 0; t < 500; ++t) {
      BeatTimeline music, motion;
      std::int64_t f = 0;
      for (std::size_t i = 0, n = uniform(rng, 1, 8); i < n; ++i) music.frames.push_back(f += 1 + static_cast<std::int64_t>(uniform(rng, 0, 40)));
      f = 0;
      for (std::size_t i = 0, n = uniform(rng, 1, 8); i < n; ++i) motion.frames.push_back(f += 1 + static_cast<std::int64_t>(uniform(rng, 0, 40)));
      const double before = beat_align(motion, music);
      const std::size_t which = uniform(rng, 0, motion.frames.size() - 1);
      std::int64_t& beat = motion.frames[which];
      std::int64_t nearest = music.frames[0];
      for (std::int64_t m : music.frames)
        if (std::abs(m - beat) < std::abs(nearest - beat)) nearest = m;
      if (nearest == beat) continue;
      const std::int64_t moved = beat + (nearest > beat ? 1 : -1);
      const bool keeps_order = (which == 0 || motion.frames[which - 1] < moved) &&
                               (which + 1 == motion.frames.size() || moved < motion.frames[which + 1]);
      if (!keeps_order) continue;
      beat = moved;
      ok = ok && beat_align(motion, music) >= before;
    }
    c.truth("beat_align_monotone", ok, "500 random single-beat moves toward the nearest music beat");
  });

  c.guarded("motion_beats_strictness", [&] {
    const std::vector<double> v1{3, 1, 2}, v2{3, 1, 1, 2};
    const bool ok = strict_local_minima(v1) == std::vector<std::int64_t>{1} && strict_local_minima(v2).empty();
    c.truth("motion_beats_strictness", ok, "[3,1,2] -> {1}; plateau [3,1,1,2] -> {}");
  });

  c.guarded("synth_motion_beats_contract", [&] {
    bool ok = true;
    for (std::size_t period : {5, 16, 23, 30}) {
      const SynthPair p = synth_pair(period, 3.0, 60, period);
      std::vector<std::int64_t> interior;
      for (std::int64_t f : music_beats(p.audio).frames)
        if (f >= 1 && f + 1 < static_cast<std::int64_t>(p.motion.rows())) interior.push_back(f);
      ok = ok && motion_beats(p.motion).frames == interior;
    }
    c.truth("synth_motion_beats_contract", ok, "motion beats equal the interior music beats");
  });

  return c.finish();
}

// ---------------------------------------------------------------- model

// Canonical-attention forward pass written out independently of model.cpp;
// it is what the model must reduce to with use_spe and use_qra both off.
Matrix canonical_reference(const Matrix& seed, const Matrix& audio, const ModelWeights& w,
                           const ModelConfig& cfg) {
  auto affine = [](const Matrix& x, const Matrix& wt, const Matrix* b) {
    Matrix y(x.rows(), wt.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < wt.cols(); ++c) {
        double s = b ? (*b)(0, c) : 0.0;
        for (std::size_t i = 0; i < x.cols(); ++i) s += x(r, i) * wt(i, c);
        y(r, c) = s;
      }
    return y;
  };
  auto norm = [](const Matrix& x, const LayerNormWeights& n) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      double mean = 0.0, var = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) mean += x(r, c);
      mean /= static_cast<double>(x.cols());
      for (std::size_t c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
      var /= static_cast<double>(x.cols());
      for (std::size_t c = 0; c < x.cols(); ++c)
        y(r, c) = (x(r, c) - mean) / std::sqrt(var + 1e-5) * n.gain(0, c) + n.bias(0, c);
    }
    return y;
  };
  auto attend = [](const Matrix& q, const Matrix& k, const Matrix& v) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Matrix out(q.rows(), v.cols());
    for (std::size_t a = 0; a < q.rows(); ++a) {
      std::vector<double> s(k.rows());
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < k.rows(); ++b) {
        double d = 0.0;
        for (std::size_t c = 0; c < q.cols(); ++c) d += q(a, c) * k(b, c);
        s[b] = d * scale;
        mx = std::max(mx, s[b]);
      }
      double z = 0.0;
      for (double& e : s) z += e = std::exp(e - mx);
      for (std::size_t b = 0; b < k.rows(); ++b)
        for (std::size_t c = 0; c < v.cols(); ++c) out(a, c) += s[b] / z * v(b, c);
    }
    return out;
  };
  auto ffn = [&](const Matrix& x, const FeedForwardWeights& f) {
    Matrix hdn = affine(x, f.in.w, &f.in.b);
    for (double& v : hdn.values())
      v = 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / kPi) * (v + 0.044715 * v * v * v)));
    return affine(hdn, f.out.w, &f.out.b);
  };
  auto encoder = [&](Matrix x, const std::vector<EncoderLayerWeights>& layers) {
    const std::size_t dh = cfg.d_model / cfg.heads;
    for (const EncoderLayerWeights& l : layers) {
      const Matrix a = norm(x, l.norm_attn);
      const Matrix q = affine(a, l.attn.w_q, nullptr), k = affine(a, l.attn.w_k, nullptr),
                   v = affine(a, l.attn.w_v, nullptr);
      Matrix concat(x.rows(), cfg.d_model);
      for (std::size_t hh = 0; hh < cfg.heads; ++hh)
        concat.set_col_block(hh * dh, attend(q.col_block(hh * dh, dh), k.col_block(hh * dh, dh),
                                             v.col_block(hh * dh, dh)));
      x += affine(concat, l.attn.w_o, nullptr);
      x += ffn(norm(x, l.norm_ffn), l.ffn);
    }
    return x;
  };
  Matrix hm = affine(seed, w.motion_embed.w, &w.motion_embed.b);
  Matrix ha = affine(audio, w.audio_embed.w, &w.audio_embed.b);
  if (cfg.use_learned_abs_pos) {
    hm += w.motion_pos.row_block(0, seed.rows());
    ha += w.audio_pos.row_block(0, audio.rows());
  }
  hm = encoder(hm, w.motion_encoder);
  ha = encoder(ha, w.audio_encoder);
  const Matrix memory = vstack(hm, ha);
  Matrix x = hm;
  for (const DecoderLayerWeights& l : w.decoder) {
    const Matrix a = norm(x, l.norm_query), m = norm(memory, l.norm_memory);
    Matrix concat(x.rows(), 0);
    std::vector<Matrix> outs;
    std::size_t width = 0;
    for (const QRAParams& head : l.cross.heads) {
      outs.push_back(attend(affine(a, head.w_q, nullptr), affine(m, head.w_k, nullptr), affine(m, head.w_v, nullptr)));
      width += head.d_attn;
    }
    concat = Matrix(x.rows(), width);
    std::size_t off = 0;
    for (const Matrix& o : outs) {
      concat.set_col_block(off, o);
      off += o.cols();
    }
    x += affine(concat, l.cross.w_o, nullptr);
    x += ffn(norm(x, l.norm_ffn), l.ffn);
  }
  const Matrix last = norm(x.row_block(x.rows() - 1, 1), w.final_norm);
  const Matrix flat = affine(last, w.readout.w, &w.readout.b);
  Matrix out(cfg.future_frames, kMotionChannels);
  for (std::size_t n = 0; n < cfg.future_frames; ++n)
    for (std::size_t ch = 0; ch < kMotionChannels; ++ch)
      out(n, ch) = flat(0, n * kMotionChannels + ch) +
                   (cfg.readout_residual ? seed(seed.rows() - 1, ch) : 0.0);
  return out;
}

SuiteReport suite_model(std::ostream& log) {
  Checks c("model", log);
  std::mt19937_64 rng(606);
  const ModelConfig desk = ModelConfig::desk();
  const Matrix seed = random_normal(desk.seed_motion_frames, kMotionChannels, 0.5, rng);
  const Matrix audio = random_normal(desk.audio_frames, kAudioChannels, 0.5, rng);

  c.guarded("determinism", [&] {
    const ModelWeights w1 = init_weights(desk, 3), w2 = init_weights(desk, 3);
    const bool same_weights = checkpoint_to_string(desk, w1) == checkpoint_to_string(desk, w2);
    const bool same_out = predict(seed, audio, w1, desk) == predict(seed, audio, w1, desk);
    c.truth("determinism", same_weights && same_out, "seeded init and repeated forward are bit-identical");
  });

  c.guarded("shape_contract", [&] {
    bool ok = true;
    std::string detail;
    for (const ModelConfig& cfg : {ModelConfig::desk(), ModelConfig::paper()}) {
      const ModelWeights w = init_weights(cfg, 1);
      std::mt19937_64 r(1);
      const Matrix s = random_normal(cfg.seed_motion_frames, kMotionChannels, 0.5, r);
      const Matrix a = random_normal(cfg.audio_frames, kAudioChannels, 0.5, r);
      const Matrix hm = embed_stream(s, StreamKind::Motion, w, cfg);
      const Matrix ha = embed_stream(a, StreamKind::Audio, w, cfg);
      const Matrix em = encode(hm, w.motion_encoder, cfg), ea = encode(ha, w.audio_encoder, cfg);
      const Matrix out = cross_modal_decode(em, ea, s.row(s.rows() - 1), w, cfg);
      ok = ok && hm.rows() == cfg.seed_motion_frames && hm.cols() == cfg.d_model &&
           ha.rows() == cfg.audio_frames && ha.cols() == cfg.d_model && em.rows() == hm.rows() &&
           em.cols() == cfg.d_model && ea.rows() == ha.rows() && ea.cols() == cfg.d_model &&
           out.rows() == cfg.future_frames && out.cols() == kMotionChannels && out.all_finite();
      detail += (detail.empty() ? "" : ", ") + std::to_string(cfg.d_model) + "-dim ok=" + (ok ? "1" : "0");
    }
    c.truth("shape_contract", ok, detail);
  });

  c.guarded("ablation_coherence", [&] {
    ModelConfig cfg = desk;
    cfg.use_spe = false;
    cfg.use_qra = false;
    const ModelWeights w = init_weights(cfg, 5);
    const double err = max_abs_diff(predict(seed, audio, w, cfg), canonical_reference(seed, audio, w, cfg));
    c.within("ablation_coherence", err, 1e-10, "spe off, qra off vs canonical reference path");
  });

  c.guarded("checkpoint_roundtrip", [&] {
    const ModelWeights w = init_weights(desk, 9);
    const std::string text = checkpoint_to_string(desk, w);
    const Checkpoint back = checkpoint_from_string(text);
    c.truth("checkpoint_roundtrip", checkpoint_to_string(back.config, back.weights) == text &&
                                        predict(seed, audio, back.weights, back.config) ==
                                            predict(seed, audio, w, desk),
            "save/load is bit-identical");
  });

  return c.finish();
}

// ---------------------------------------------------------------- features

SuiteReport suite_features(std::ostream& log) {
  Checks c("features", log);
  std::mt19937_64 rng(707);

  c.guarded("encode_example", [&] {
    std::vector<Quaternion> rot(kJoints, kUnitOne);
    rot[0] = {std::cos(kPi / 4), std::sin(kPi / 4), 0, 0};
    const std::vector<double> v = encode_motion_frame(rot, {0, 0, 0});
    const double want[9] = {1, 0, 0, 0, 0, -1, 0, 1, 0};
    double err = 0.0;
    for (int i = 0; i < 9; ++i) err = std::max(err, std::abs(v[i] - want[i]));
    c.within("encode_example", err, 1e-12, "90 degrees about x");
  });

  c.guarded("encode_decode_roundtrip", [&] {
    double err = 0.0;
    bool translation_exact = true;
    for (int t = 0; t < 20; ++t) {
      std::vector<Quaternion> rot(kJoints);
      for (Quaternion& q : rot) q = random_unit(rng);
      std::normal_distribution<double> n(0.0, 3.0);
      const std::array<double, 3> tr{n(rng), n(rng), n(rng)};
      const DecodedFrame d = decode_motion_frame(encode_motion_frame(rot, tr));
      for (std::size_t j = 0; j < kJoints; ++j)
        err = std::max(err, std::min(qdiff(d.rotations[j], rot[j]), qdiff(d.rotations[j], q_neg(rot[j]))));
      translation_exact = translation_exact && d.translation == tr;
    }
    c.within("encode_decode_roundtrip", translation_exact ? err : 1.0, 1e-9,
             "quaternions up to sign, translation exact");
  });

  c.guarded("decode_reorthonormalization", [&] {
    double err = 0.0;
    for (int t = 0; t < 200; ++t) {
      RotationMatrix r = quat_to_rotmat(random_unit(rng));
      const Matrix noise = random_normal(1, 9, 1.0, rng);
      const double scale = 1e-2 / frobenius_norm(noise);
      for (int i = 0; i < 9; ++i) r[i] += scale * noise.values()[i];
      const RotationMatrix p = nearest_rotation(r);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          double s = 0.0;
          for (int k = 0; k < 3; ++k) s += p[3 * k + i] * p[3 * k + j];
          err = std::max(err, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
    }
    c.within("decode_reorthonormalization", err, 1e-9, "RᵀR = I after ‖ε‖ = 1e-2 noise");
  });

  c.guarded("synth_beat_channel_binary", [&] {
    const SynthPair p = synth_pair(3, 4.0, 60, 17);
    bool ok = true;
    for (std::size_t t = 0; t < p.audio.rows(); ++t) {
      const double b = p.audio(t, kBeatChannel), pk = p.audio(t, kPeakChannel);
      ok = ok && (b == 0.0 || b == 1.0) && (pk == 0.0 || pk == 1.0) && ((b == 1.0) == (t % 17 == 0));
    }
    c.truth("synth_beat_channel_binary", ok && p.audio.all_finite() && p.motion.all_finite());
  });

  c.guarded("synth_strict_minima_at_beats", [&] {
    bool ok = true;
    for (std::size_t period : {4, 11, 24}) {
      const SynthPair p = synth_pair(period + 1, 2.0, 60, period);
      const std::vector<double> v = motion_velocity(p.motion);
      for (std::size_t b = period; b + 1 < v.size(); b += period) ok = ok && v[b] < v[b - 1] && v[b] < v[b + 1];
    }
    c.truth("synth_strict_minima_at_beats", ok);
  });

  c.guarded("stream_file_roundtrip", [&] {
    Matrix m = random_normal(7, kAudioChannels, 1e3, rng);
    m(0, 0) = std::numeric_limits<double>::denorm_min();
    m(0, 1) = std::numeric_limits<double>::max();
    m(0, 2) = -std::numeric_limits<double>::min();
    m(0, 3) = -0.0;
    m(0, 4) = 0.1;
    const std::filesystem::path dir = std::filesystem::temp_directory_path() /
                                      ("qean-verify-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(dir);
    save_stream(dir / "a.csv", m, make_meta(StreamKind::Audio, m.rows()));
    const Stream s = load_stream(dir / "a.csv");
    std::filesystem::remove_all(dir);
    bool bits = s.data.rows() == m.rows() && s.data.cols() == m.cols();
    for (std::size_t i = 0; bits && i < m.size(); ++i)
      bits = std::memcmp(&m.values()[i], &s.data.values()[i], sizeof(double)) == 0;
    c.truth("stream_file_roundtrip", bits, "bit-identical, including denormals, extremes and -0");
  });

  return c.finish();
}

// ---------------------------------------------------------------- training

SuiteReport suite_training(std::ostream& log) {
  Checks c("training", log);

  c.guarded("lr_nonincreasing", [&] {
    bool ok = true;
    for (const TrainConfig& tc : {TrainConfig::desk(), TrainConfig::paper()}) {
      double prev = lr_at(0, tc);
      for (std::size_t s = 1; s <= tc.total_steps; ++s) {
        const double lr = lr_at(s, tc);
        ok = ok && lr <= prev;
        prev = lr;
      }
    }
    const TrainConfig p = TrainConfig::paper();
    ok = ok && lr_at(0, p) == 1e-4 && lr_at(90000, p) == 1e-5 && lr_at(149999, p) == 1e-5 &&
         lr_at(150000, p) == 1e-6;
    c.truth("lr_nonincreasing", ok, "desk and paper schedules, paper boundaries");
  });

  c.guarded("adam_first_step", [&] {
    Matrix p(1, 1, 0.5);
    const Matrix g(1, 1, 1.0);
    OptimizerState st;
    Matrix* ps[] = {&p};
    const Matrix* gs[] = {&g};
    adam_step(ps, gs, st, 0.1, TrainConfig::desk());
    c.within("adam_first_step", std::abs((p(0, 0) - 0.5) - (-0.1 / (1.0 + 1e-8))), 1e-15, "g = 1, lr = 0.1");
  });

  ModelConfig small;
  small.d_model = 16;
  small.heads = 2;
  small.d_ff = 16;
  small.encoder_layers = 1;
  small.seed_motion_frames = 8;
  small.audio_frames = 12;
  small.future_frames = 2;

  c.guarded("determinism", [&] {
    std::vector<TrainingPair> data;
    for (std::uint64_t s : {1, 2}) {
      const SynthPair p = synth_pair(s, 0.5, 60, 8 + s);
      data.push_back({p.audio, p.motion});
    }
    TrainConfig tc;
    tc.total_steps = 12;
    tc.batch_size = 3;
    tc.rng_seed = 42;
    auto run = [&] {
      ModelWeights w = init_weights(small, 4);
      const auto trace = train(w, data, small, tc);
      return loss_trace_csv(trace) + checkpoint_to_string(small, w);
    };
    c.truth("determinism", run() == run(), "loss trace and checkpoint bytes");
  });

  c.guarded("single_example_overfit", [&] {
    const ModelConfig cfg = ModelConfig::desk();
    const SynthPair p = synth_pair(11, 2.0, 60, 20);
    const std::vector<TrainingPair> data{{p.audio, p.motion}};
    const std::vector<Window> batch{{0, 17}};
    const TrainConfig tc = TrainConfig::desk();
    ModelWeights w = init_weights(cfg, 2);
    OptimizerState st;
    double loss = std::numeric_limits<double>::infinity();
    std::size_t step = 0;
    for (; step < 2000 && loss >= 1e-3; ++step) loss = train_step(w, st, data, batch, cfg, tc, step);
    c.within("single_example_overfit", loss, 1e-3, "loss below 1e-3 after " + std::to_string(step) + " steps");
  });

  return c.finish();
}

// ---------------------------------------------------------------- cli

SuiteReport suite_cli(std::ostream& log) {
  Checks c("cli", log);

  c.guarded("exit_code_mapping", [&] {
    const bool ok = exit_code_for(Errc::ConfigError) == Exit::Usage &&
                    exit_code_for(Errc::AudioTooShort) == Exit::Runtime &&
                    exit_code_for(Errc::MalformedFile) == Exit::Runtime &&
                    exit_code_for(Errc::TooFewItems) == Exit::Metric &&
                    exit_code_for(Errc::EmptyMotionBeats) == Exit::Metric;
    c.truth("exit_code_mapping", ok, "usage 2, runtime 3, metric 4");
  });

  c.guarded("synth_idempotent", [&] {
    const SynthPair a = synth_pair(5, 1.0, 60, 12), b = synth_pair(5, 1.0, 60, 12);
    c.truth("synth_idempotent", stream_to_csv(a.audio) == stream_to_csv(b.audio) &&
                                    stream_to_csv(a.motion) == stream_to_csv(b.motion));
  });

  c.guarded("config_echo_roundtrip", [&] {
    RunConfig rc = parse_run_config("preset = desk\nd_model = 32\ndecay_steps = 10:1e-5, 20:1e-6\nuse_spe = false\n");
    const std::string echo = rc.to_string();
    c.truth("config_echo_roundtrip", parse_run_config(echo).to_string() == echo && rc.model.d_model == 32 &&
                                         !rc.model.use_spe && rc.train.decay.size() == 2,
            "echoed effective config parses back to itself");
  });

  return c.finish();
}

struct SuiteEntry {
  const char* name;
  std::size_t count;
  SuiteReport (*run)(std::ostream&);
};

constexpr SuiteEntry kSuites[] = {
    {"algebra", 15, suite_algebra}, {"spe", 4, suite_spe},           {"qra", 5, suite_qra},
    {"grad", 9, suite_grad},        {"metrics", 12, suite_metrics},  {"model", 4, suite_model},
    {"features", 6, suite_features}, {"training", 4, suite_training}, {"cli", 3, suite_cli},
};

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const SuiteEntry& s : kSuites) n.push_back(s.name);
    return n;
  }();
  return names;
}

std::size_t expected_check_count(const std::string& suite) {
  std::size_t total = 0;
  for (const SuiteEntry& s : kSuites) {
    if (suite == s.name) return s.count;
    total += s.count;
  }
  if (suite == "all") return total;
  throw Error(Errc::ConfigError, "unknown verify suite '" + suite + "'");
}

std::vector<SuiteReport> run_suite(const std::string& suite, std::ostream& log) {
  std::vector<SuiteReport> out;
  bool known = suite == "all";
  for (const SuiteEntry& s : kSuites) {
    if (suite != "all" && suite != s.name) continue;
    known = true;
    out.push_back(s.run(log));
  }
  if (!known) throw Error(Errc::ConfigError, "unknown verify suite '" + suite + "'");
  return out;
}

}  // namespace qean
