#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qean/error.hpp"

namespace qean {

/// Dense row-major matrix of doubles. Vectors are 1×n or n×1 matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  Matrix transposed() const;
  void fill(double v);
  bool all_finite() const noexcept;

  /// Rows [begin, begin+count) as a new matrix.
  Matrix row_block(std::size_t begin, std::size_t count) const;
  /// Columns [begin, begin+count) as a new matrix.
  Matrix col_block(std::size_t begin, std::size_t count) const;
  void set_col_block(std::size_t begin, const Matrix& block);
  void add_col_block(std::size_t begin, const Matrix& block);

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// Largest absolute elementwise difference; DimensionMismatch on shape mismatch.
double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
Matrix vstack(const Matrix& top, const Matrix& bottom);
Matrix hadamard(const Matrix& a, const Matrix& b);
/// Entries drawn from N(0, stddev²).
Matrix random_normal(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng);
/// Sum over rows, 1×cols.
Matrix column_sums(const Matrix& a);

// Kernels. Each output element is reduced sequentially over the contraction
// index, so the OpenMP row split never changes the bits of the result.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// aᵀ · b
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix softmax_rows(const Matrix& m);
/// Gradient of a loss w.r.t. the logits given softmax output s and upstream ds.
Matrix softmax_rows_backward(const Matrix& s, const Matrix& ds);

/// Temporal convolution weights. `weights` is (width·in_channels) × out_channels;
/// row tap·in_channels + c holds the weights applied to channel c at time offset
/// tap − (width−1)/2.
struct ConvKernel {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t width = 0;
  Matrix weights;
  Matrix bias;  // 1 × out_channels

  ConvKernel() = default;
  ConvKernel(std::size_t in, std::size_t out, std::size_t width);
  std::size_t half() const noexcept { return (width - 1) / 2; }
};

/// Same-padded cross-correlation along rows (time).
Matrix conv1d(const Matrix& x, const ConvKernel& k);

struct ConvGrads {
  Matrix dx;
  Matrix dweights;
  Matrix dbias;
};
ConvGrads conv1d_backward(const Matrix& x, const ConvKernel& k, const Matrix& dy);

double relu(double x) noexcept;
double pi_tanh(double x) noexcept;
Matrix relu(const Matrix& m);
Matrix pi_tanh(const Matrix& m);

/// Principal square root of S + eps·I via eigendecomposition, negative
/// eigenvalues clamped to zero. NotSymmetric when |S − Sᵀ| exceeds 1e-9
/// (relative to max(1, max|S|)).
Matrix sym_sqrt(const Matrix& s, double eps = 0.0);

/// One tensor for finite-difference checking: `value` is perturbed in place
/// and restored, `analytic` holds the gradient to compare against.
struct GradTarget {
  std::string name;
  Matrix* value = nullptr;
  const Matrix* analytic = nullptr;
};

struct GradReport {
  struct Entry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    bool pass = true;
  };
  std::vector<Entry> entries;
  double max_rel_error = 0.0;
  double tol = 0.0;
  bool pass = true;
};

/// Central-difference gradient check. Relative error per entry is
/// |a − n| / max(|a|, |n|, 1e-8). When `max_entries_per_tensor` is nonzero,
/// that many entries per tensor are drawn with a seeded generator instead of
/// sweeping every entry. Throws NonFiniteLoss.
GradReport grad_check(const std::function<double()>& loss, std::span<const GradTarget> targets,
                      double h = 1e-5, double tol = 1e-4, std::size_t max_entries_per_tensor = 0,
                      std::uint64_t seed = 0);

namespace serial {
// Straight single-threaded loops kept as the reference for the kernels above.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix softmax_rows(const Matrix& m);
Matrix conv1d(const Matrix& x, const ConvKernel& k);
}  // namespace serial

}  // namespace qean
