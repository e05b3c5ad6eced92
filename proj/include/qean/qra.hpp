#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "qean/numerics.hpp"
#include "qean/quaternion.hpp"

namespace qean {

/// One quaternion rotary attention head.
///
/// Queries and keys are projected (Q = X·W_Q, K = Y·W_K), each row is read as
/// d_attn/4 quaternions, and for every period p the rows are rotated by a unit
/// quaternion whose angle 2π·ω[n,p]·pos[n] + θ[n,p] comes from learned 1D
/// convolutions over the projected sequence (ω through ReLU, θ through π·tanh).
/// The similarity is the mean over periods of the real part of q ⊗ k*, scaled
/// by 1/√d_attn, and it is softmax-normalized over keys before aggregating V.
struct QRAParams {
  std::size_t d_model = 0;
  std::size_t d_attn = 0;
  std::size_t periods = 1;
  Matrix w_q, w_k, w_v;  // d_model × d_attn
  ConvKernel omega_q, theta_q, omega_k, theta_k;  // d_attn → periods

  /// All-zero weights of the given shape.
  static QRAParams zeros(std::size_t d_model, std::size_t d_attn, std::size_t periods,
                         std::size_t conv_width = 3);
  /// Projections ~ N(0, 1/d_model); convolution weights ~ N(0, 0.5/(width·d_attn)).
  static QRAParams random(std::size_t d_model, std::size_t d_attn, std::size_t periods,
                          std::mt19937_64& rng, std::size_t conv_width = 3);

  /// HeadDimNotQuaternion when d_attn is not a multiple of 4; DimensionMismatch
  /// on inconsistent shapes.
  void validate() const;
};

struct FreqPhase {
  Matrix omega;  // steps × P, ≥ 0
  Matrix theta;  // steps × P, in (−π, π)
};

/// [0, 1, …, L−1] / L
std::vector<double> position_vector(std::size_t length);

FreqPhase gen_freq_phase(const Matrix& z, const ConvKernel& omega_kernel,
                         const ConvKernel& theta_kernel);

/// One QuaternionSeries per period: each slot of row n right-multiplied by
/// unit_exp(axis, 2π·ω[n,p]·pos[n] + θ[n,p]).
std::vector<QuaternionSeries> series_rotate(const Matrix& z, const FreqPhase& fp,
                                            std::span<const double> pos, Axis axis);

/// (n, m) ↦ 1/(P·√d_attn) · Σ_p Σ_slot Re[Φ_p[n,slot] ⊗ Ψ_p[m,slot]*]
Matrix rotary_similarity(std::span<const QuaternionSeries> phi,
                         std::span<const QuaternionSeries> psi, std::size_t d_attn);

/// softmax(Q·Kᵀ/√d)·V
Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v);

struct QRAOptions {
  /// Rotation axis for keys; queries always use i.
  Axis key_axis = Axis::J;
  /// false swaps the rotary similarity for canonical scaled dot-product
  /// attention on the same projections.
  bool quaternion = true;
};

/// Intermediates kept for the backward pass.
struct QRACache {
  Matrix x, y, q, k, v;
  Matrix pre_omega_q, pre_theta_q, pre_omega_k, pre_theta_k;
  FreqPhase fq, fk;
  std::vector<Matrix> phi, psi;  // per period, rows in flattened quaternion form
  std::vector<double> pos_q, pos_k;
  Matrix attn;  // softmax output
  QRAOptions options;
};

Matrix qra_attention(const Matrix& x, const Matrix& y, const QRAParams& params,
                     const QRAOptions& options = {}, QRACache* cache = nullptr);

struct InputGrads {
  Matrix dx;
  Matrix dy;
};

/// Accumulates parameter gradients into `grads` (same shapes as params) and
/// returns the gradients w.r.t. the query and key/value inputs.
InputGrads qra_attention_backward(const QRACache& cache, const QRAParams& params,
                                  const Matrix& dh, QRAParams& grads);

struct MultiHeadQRAParams {
  std::vector<QRAParams> heads;
  Matrix w_o;  // (Σ d_attn) × d_model

  /// HeadDimNotQuaternion when d_model/heads is not a multiple of 4 (and
  /// `require_quaternion`), DimensionMismatch when heads does not divide d_model.
  static MultiHeadQRAParams random(std::size_t d_model, std::size_t heads, std::size_t periods,
                                   std::mt19937_64& rng, bool require_quaternion = true);
  static MultiHeadQRAParams zeros_like(const MultiHeadQRAParams& other);
};

struct MultiHeadQRACache {
  std::vector<QRACache> heads;
  Matrix concat;
};

/// Concatenated per-head outputs projected by W_O.
Matrix multi_head_qra(const Matrix& x, const Matrix& y, const MultiHeadQRAParams& params,
                      const QRAOptions& options = {}, MultiHeadQRACache* cache = nullptr);

InputGrads multi_head_qra_backward(const MultiHeadQRACache& cache,
                                   const MultiHeadQRAParams& params, const Matrix& dout,
                                   MultiHeadQRAParams& grads);

}  // namespace qean
