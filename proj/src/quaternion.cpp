#include "qean/quaternion.hpp"

#include <algorithm>
#include <cmath>

namespace qean {

Quaternion q_add(const Quaternion& q, const Quaternion& r) noexcept {
  return {q.e + r.e, q.f + r.f, q.g + r.g, q.h + r.h};
}

Quaternion q_scale(double gamma, const Quaternion& q) noexcept {
  return {gamma * q.e, gamma * q.f, gamma * q.g, gamma * q.h};
}

Quaternion q_conj(const Quaternion& q) noexcept { return {q.e, -q.f, -q.g, -q.h}; }

Quaternion q_neg(const Quaternion& q) noexcept { return {-q.e, -q.f, -q.g, -q.h}; }

Quaternion hamilton(const Quaternion& q, const Quaternion& r) noexcept {
#ifdef QEAN_MUTATE_HAMILTON
  // Deliberately broken j-row for the verification mutation fixture.
  const double j = q.e * r.g - q.f * r.h + q.g * r.e - q.h * r.f;
#else
  const double j = q.e * r.g - q.f * r.h + q.g * r.e + q.h * r.f;
#endif
  return {
      q.e * r.e - q.f * r.f - q.g * r.g - q.h * r.h,
      q.e * r.f + q.f * r.e + q.g * r.h - q.h * r.g,
      j,
      q.e * r.h + q.f * r.g - q.g * r.f + q.h * r.e,
  };
}

double q_norm(const Quaternion& q) noexcept { return std::sqrt(q_dot(q, q)); }

double q_dot(const Quaternion& q, const Quaternion& r) noexcept {
  return q.e * r.e + q.f * r.f + q.g * r.g + q.h * r.h;
}

Quaternion unit_exp(Axis axis, double angle) noexcept {
  const double c = std::cos(angle), s = std::sin(angle);
  switch (axis) {
    case Axis::I: return {c, s, 0, 0};
    case Axis::J: return {c, 0, s, 0};
    case Axis::K: return {c, 0, 0, s};
  }
  return {c, 0, 0, 0};
}

Quaternion unit_exp_derivative(Axis axis, double angle) noexcept {
  const double c = std::cos(angle), s = std::sin(angle);
  switch (axis) {
    case Axis::I: return {-s, c, 0, 0};
    case Axis::J: return {-s, 0, c, 0};
    case Axis::K: return {-s, 0, 0, c};
  }
  return {-s, 0, 0, 0};
}

std::vector<Quaternion> quaternionize(std::span<const double> v) {
  if (v.size() < 4)
    throw Error(Errc::InsufficientDims, "quaternionize needs at least 4 values");
  std::vector<Quaternion> out(v.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = {v[4 * i], v[4 * i + 1], v[4 * i + 2], v[4 * i + 3]};
  return out;
}

void flatten(std::span<const Quaternion> q, std::span<double> out) {
  if (out.size() < 4 * q.size()) throw Error(Errc::DimensionMismatch, "flatten output too short");
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[4 * i] = q[i].e;
    out[4 * i + 1] = q[i].f;
    out[4 * i + 2] = q[i].g;
    out[4 * i + 3] = q[i].h;
  }
}

QuaternionSeries QuaternionSeries::from_rows(const Matrix& m) {
  if (m.cols() % 4 != 0 || m.cols() == 0)
    throw Error(Errc::DimensionMismatch, "series rows must hold whole quaternions");
  QuaternionSeries s(m.rows(), m.cols() / 4);
  for (std::size_t t = 0; t < m.rows(); ++t) {
    auto row = m.row(t);
    for (std::size_t k = 0; k < s.slots_; ++k)
      s.at(t, k) = {row[4 * k], row[4 * k + 1], row[4 * k + 2], row[4 * k + 3]};
  }
  return s;
}

Matrix QuaternionSeries::to_matrix() const {
  Matrix m(steps_, 4 * slots_);
  for (std::size_t t = 0; t < steps_; ++t) flatten(step(t), m.row(t));
  return m;
}

RotationMatrix quat_to_rotmat(const Quaternion& q) {
  if (std::abs(q_norm(q) - 1.0) >= 1e-6) throw Error(Errc::NotUnit, "quaternion is not unit");
  const double e = q.e, f = q.f, g = q.g, h = q.h;
  return {
      1 - 2 * (g * g + h * h), 2 * (f * g - h * e),     2 * (f * h + g * e),
      2 * (f * g + h * e),     1 - 2 * (f * f + h * h), 2 * (g * h - f * e),
      2 * (f * h - g * e),     2 * (g * h + f * e),     1 - 2 * (f * f + g * g),
  };
}

Quaternion rotmat_to_quat(const RotationMatrix& r) {
  auto at = [&](int i, int j) { return r[static_cast<std::size_t>(3 * i + j)]; };
  double err = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += at(k, i) * at(k, j);
      err = std::max(err, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  const double det = at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) -
                     at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0)) +
                     at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0));
  if (err > 1e-6 || std::abs(det - 1.0) > 1e-6)
    throw Error(Errc::NotRotation, "matrix is not a proper rotation");

  // Shepperd: pivot on the largest of the four squared components.
  const double tr = at(0, 0) + at(1, 1) + at(2, 2);
  Quaternion q;
  if (tr >= at(0, 0) && tr >= at(1, 1) && tr >= at(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    q = {0.25 * s, (at(2, 1) - at(1, 2)) / s, (at(0, 2) - at(2, 0)) / s, (at(1, 0) - at(0, 1)) / s};
  } else if (at(0, 0) >= at(1, 1) && at(0, 0) >= at(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + at(0, 0) - at(1, 1) - at(2, 2));
    q = {(at(2, 1) - at(1, 2)) / s, 0.25 * s, (at(0, 1) + at(1, 0)) / s, (at(0, 2) + at(2, 0)) / s};
  } else if (at(1, 1) >= at(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + at(1, 1) - at(0, 0) - at(2, 2));
    q = {(at(0, 2) - at(2, 0)) / s, (at(0, 1) + at(1, 0)) / s, 0.25 * s, (at(1, 2) + at(2, 1)) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + at(2, 2) - at(0, 0) - at(1, 1));
    q = {(at(1, 0) - at(0, 1)) / s, (at(0, 2) + at(2, 0)) / s, (at(1, 2) + at(2, 1)) / s, 0.25 * s};
  }
  const double n = q_norm(q);
  q = q_scale(1.0 / n, q);
  return q.e < 0.0 ? q_neg(q) : q;
}

}  // namespace qean
