#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qean/numerics.hpp"

namespace qean {

/// Per-pair rotation frequencies for the spin position embedding.
/// Pair t of a dim-wide vector turns by pos·angles[t].
class RotarySchedule {
 public:
  /// Geometric schedule angles[t] = base^(−2t/dim). DimensionMismatch on odd
  /// or zero dim.
  RotarySchedule(std::size_t dim, double base = 10000.0);

  /// Explicit angles (one per pair), e.g. all zeros for the degenerate case.
  static RotarySchedule with_angles(std::vector<double> angles);

  std::size_t dim() const noexcept { return dim_; }
  double base() const noexcept { return base_; }
  std::span<const double> angles() const noexcept { return angles_; }

 private:
  RotarySchedule() = default;
  std::size_t dim_ = 0;
  double base_ = 0.0;
  std::vector<double> angles_;
};

/// Rotates every pair (x[2t], x[2t+1]) by pos·θ_t.
std::vector<double> rope_rotate(std::span<const double> x, std::int64_t pos,
                                const RotarySchedule& sched);

/// Same map written as complex multiplication (x[2t] + i·x[2t+1])·e^{i·pos·θ_t}.
std::vector<double> rope_rotate_complex(std::span<const double> x, std::int64_t pos,
                                        const RotarySchedule& sched);

/// Row r rotated to position r + offset. With `inverse` the rotation is undone,
/// which is also the adjoint used in backward passes.
Matrix rope_rotate_rows(const Matrix& m, const RotarySchedule& sched, std::int64_t offset,
                        bool inverse = false);

/// (s, t) ↦ ⟨rot(Q[s], s + q_offset), rot(K[t], t + k_offset)⟩, unscaled.
Matrix rope_logits(const Matrix& q, const Matrix& k, const RotarySchedule& sched,
                   std::int64_t q_offset = 0, std::int64_t k_offset = 0);

}  // namespace qean
