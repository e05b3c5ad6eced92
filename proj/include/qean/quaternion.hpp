#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "qean/numerics.hpp"

namespace qean {

/// e + f·i + g·j + h·k
struct Quaternion {
  double e = 0.0;
  double f = 0.0;
  double g = 0.0;
  double h = 0.0;

  friend bool operator==(const Quaternion&, const Quaternion&) = default;
};

enum class Axis { I, J, K };

inline constexpr Quaternion kUnitOne{1, 0, 0, 0};
inline constexpr Quaternion kUnitI{0, 1, 0, 0};
inline constexpr Quaternion kUnitJ{0, 0, 1, 0};
inline constexpr Quaternion kUnitK{0, 0, 0, 1};

Quaternion q_add(const Quaternion& q, const Quaternion& r) noexcept;
Quaternion q_scale(double gamma, const Quaternion& q) noexcept;
Quaternion q_conj(const Quaternion& q) noexcept;
Quaternion q_neg(const Quaternion& q) noexcept;
Quaternion hamilton(const Quaternion& q, const Quaternion& r) noexcept;
double q_norm(const Quaternion& q) noexcept;
/// Four-dimensional Euclidean inner product, equal to Re[q ⊗ r*].
double q_dot(const Quaternion& q, const Quaternion& r) noexcept;

/// cos(angle) + sin(angle)·axis
Quaternion unit_exp(Axis axis, double angle) noexcept;
/// d/d(angle) of unit_exp: −sin(angle) + cos(angle)·axis
Quaternion unit_exp_derivative(Axis axis, double angle) noexcept;

/// Consecutive 4-blocks become (e, f, g, h); a 1–3 entry remainder is dropped.
/// InsufficientDims when fewer than four values are given.
std::vector<Quaternion> quaternionize(std::span<const double> v);
/// Inverse of quaternionize on whole blocks: writes 4·q.size() values.
void flatten(std::span<const Quaternion> q, std::span<double> out);

/// Per-step slots of quaternions, step-major.
class QuaternionSeries {
 public:
  QuaternionSeries() = default;
  QuaternionSeries(std::size_t steps, std::size_t slots)
      : steps_(steps), slots_(slots), values_(steps * slots) {}

  /// Each row of a steps × (4·slots) matrix quaternionized.
  static QuaternionSeries from_rows(const Matrix& m);
  /// Back to steps × (4·slots).
  Matrix to_matrix() const;

  std::size_t steps() const noexcept { return steps_; }
  std::size_t slots_per_step() const noexcept { return slots_; }
  Quaternion& at(std::size_t step, std::size_t slot) { return values_[step * slots_ + slot]; }
  const Quaternion& at(std::size_t step, std::size_t slot) const {
    return values_[step * slots_ + slot];
  }
  std::span<const Quaternion> step(std::size_t s) const { return {values_.data() + s * slots_, slots_}; }

 private:
  std::size_t steps_ = 0;
  std::size_t slots_ = 0;
  std::vector<Quaternion> values_;
};

using RotationMatrix = std::array<double, 9>;  // row-major 3×3

/// Rotation matrix of a unit quaternion; NotUnit when |‖q‖ − 1| ≥ 1e-6.
RotationMatrix quat_to_rotmat(const Quaternion& q);
/// Inverse with nonnegative real part; NotRotation unless RᵀR = I and det R = 1
/// within 1e-6.
Quaternion rotmat_to_quat(const RotationMatrix& r);

}  // namespace qean
