#include "qean/spe.hpp"

#include <cmath>
#include <complex>

namespace qean {

RotarySchedule::RotarySchedule(std::size_t dim, double base) : dim_(dim), base_(base) {
  if (dim == 0 || dim % 2 != 0)
    throw Error(Errc::DimensionMismatch, "rotary dimension must be even and nonzero");
  angles_.resize(dim / 2);
  for (std::size_t t = 0; t < angles_.size(); ++t)
    angles_[t] = std::pow(base, -2.0 * static_cast<double>(t) / static_cast<double>(dim));
}

RotarySchedule RotarySchedule::with_angles(std::vector<double> angles) {
  if (angles.empty()) throw Error(Errc::DimensionMismatch, "rotary schedule needs a pair");
  RotarySchedule s;
  s.dim_ = 2 * angles.size();
  s.angles_ = std::move(angles);
  return s;
}

namespace {

void rotate_pairs(std::span<const double> x, double pos, std::span<const double> angles,
                  std::span<double> out) {
  for (std::size_t t = 0; t < angles.size(); ++t) {
    const double a = pos * angles[t];
    const double c = std::cos(a), s = std::sin(a);
    const double x0 = x[2 * t], x1 = x[2 * t + 1];
    out[2 * t] = c * x0 - s * x1;
    out[2 * t + 1] = s * x0 + c * x1;
  }
}

}  // namespace

std::vector<double> rope_rotate(std::span<const double> x, std::int64_t pos,
                                const RotarySchedule& sched) {
  if (x.size() != sched.dim()) throw Error(Errc::DimensionMismatch, "rope_rotate width");
  std::vector<double> out(x.size());
  rotate_pairs(x, static_cast<double>(pos), sched.angles(), out);
  return out;
}

std::vector<double> rope_rotate_complex(std::span<const double> x, std::int64_t pos,
                                        const RotarySchedule& sched) {
  if (x.size() != sched.dim()) throw Error(Errc::DimensionMismatch, "rope_rotate width");
  std::vector<double> out(x.size());
  for (std::size_t t = 0; t < sched.angles().size(); ++t) {
    const std::complex<double> z{x[2 * t], x[2 * t + 1]};
    const std::complex<double> r = z * std::polar(1.0, static_cast<double>(pos) * sched.angles()[t]);
    out[2 * t] = r.real();
    out[2 * t + 1] = r.imag();
  }
  return out;
}

Matrix rope_rotate_rows(const Matrix& m, const RotarySchedule& sched, std::int64_t offset,
                        bool inverse) {
  if (m.cols() != sched.dim()) throw Error(Errc::DimensionMismatch, "rope_rotate_rows width");
  Matrix out(m.rows(), m.cols());
  const double sign = inverse ? -1.0 : 1.0;
  for (std::size_t r = 0; r < m.rows(); ++r)
    rotate_pairs(m.row(r), sign * static_cast<double>(static_cast<std::int64_t>(r) + offset),
                 sched.angles(), out.row(r));
  return out;
}

Matrix rope_logits(const Matrix& q, const Matrix& k, const RotarySchedule& sched,
                   std::int64_t q_offset, std::int64_t k_offset) {
  if (q.cols() != sched.dim() || k.cols() != sched.dim())
    throw Error(Errc::DimensionMismatch, "rope_logits width");
  return matmul_nt(rope_rotate_rows(q, sched, q_offset), rope_rotate_rows(k, sched, k_offset));
}

}  // namespace qean
