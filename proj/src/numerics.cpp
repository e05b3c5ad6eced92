#include "qean/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace qean {

namespace {

// Below this many multiply-adds a kernel runs on the calling thread.
constexpr std::size_t kParallelWork = 1u << 15;

void require(bool ok, const char* what) {
  if (!ok) throw Error(Errc::DimensionMismatch, what);
}

}  // namespace

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::InsufficientDims: return "InsufficientDims";
    case Errc::NotUnit: return "NotUnit";
    case Errc::NotRotation: return "NotRotation";
    case Errc::HeadDimNotQuaternion: return "HeadDimNotQuaternion";
    case Errc::ChannelMismatch: return "ChannelMismatch";
    case Errc::AudioTooShort: return "AudioTooShort";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::MalformedFile: return "MalformedFile";
    case Errc::MetaMismatch: return "MetaMismatch";
    case Errc::TooFewFrames: return "TooFewFrames";
    case Errc::TooFewItems: return "TooFewItems";
    case Errc::EmptyMotionBeats: return "EmptyMotionBeats";
    case Errc::EmptyMusicBeats: return "EmptyMusicBeats";
    case Errc::IoError: return "IoError";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

// ---------------------------------------------------------------- Matrix

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    require(row.size() == c, "ragged initializer");
    std::copy(row.begin(), row.end(), m.row(i++).begin());
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data_.begin());
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::row_block(std::size_t begin, std::size_t count) const {
  require(begin + count <= rows_, "row block out of range");
  Matrix m(count, cols_);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_), count * cols_,
              m.data_.begin());
  return m;
}

Matrix Matrix::col_block(std::size_t begin, std::size_t count) const {
  require(begin + count <= cols_, "column block out of range");
  Matrix m(rows_, count);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < count; ++c) m(r, c) = (*this)(r, begin + c);
  return m;
}

void Matrix::set_col_block(std::size_t begin, const Matrix& block) {
  require(block.rows_ == rows_ && begin + block.cols_ <= cols_, "column block shape");
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < block.cols_; ++c) (*this)(r, begin + c) = block(r, c);
}

void Matrix::add_col_block(std::size_t begin, const Matrix& block) {
  require(block.rows_ == rows_ && begin + block.cols_ <= cols_, "column block shape");
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < block.cols_; ++c) (*this)(r, begin + c) += block(r, c);
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require(rows_ == other.rows_ && cols_ == other.cols_, "elementwise add shape");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require(rows_ == other.rows_ && cols_ == other.cols_, "elementwise sub shape");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff shape");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
  require(top.cols() == bottom.cols(), "vstack column mismatch");
  Matrix m(top.rows() + bottom.rows(), top.cols());
  std::copy(top.values().begin(), top.values().end(), m.values().begin());
  std::copy(bottom.values().begin(), bottom.values().end(),
            m.values().begin() + static_cast<std::ptrdiff_t>(top.size()));
  return m;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard shape");
  Matrix m(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) m.values()[i] = a.values()[i] * b.values()[i];
  return m;
}

Matrix random_normal(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

Matrix column_sums(const Matrix& a) {
  Matrix s(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) s(0, c) += a(r, c);
  return s;
}

// ---------------------------------------------------------------- kernels

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: A.cols != B.rows");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix c(n, m);
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = pc + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = pa[i * k + kk];
      const double* bk = pb + kk * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt: A.cols != B.cols");
  return matmul(a, b.transposed());
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn: A.rows != B.rows");
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  Matrix c(n, m);
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = pc + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aki = pa[kk * n + i];
      const double* bk = pb + kk * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

namespace {

void softmax_row(std::span<const double> in, std::span<double> out) {
  if (in.empty()) return;
  const double mx = *std::max_element(in.begin(), in.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  for (double& v : out) v /= sum;
}

}  // namespace

Matrix softmax_rows(const Matrix& m) {
  Matrix s(m.rows(), m.cols());
#pragma omp parallel for schedule(static) if (m.size() > kParallelWork / 8)
  for (std::size_t r = 0; r < m.rows(); ++r) softmax_row(m.row(r), s.row(r));
  return s;
}

Matrix softmax_rows_backward(const Matrix& s, const Matrix& ds) {
  require(s.rows() == ds.rows() && s.cols() == ds.cols(), "softmax backward shape");
  Matrix dl(s.rows(), s.cols());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < s.cols(); ++c) dot += s(r, c) * ds(r, c);
    for (std::size_t c = 0; c < s.cols(); ++c) dl(r, c) = s(r, c) * (ds(r, c) - dot);
  }
  return dl;
}

ConvKernel::ConvKernel(std::size_t in, std::size_t out, std::size_t w)
    : in_channels(in), out_channels(out), width(w), weights(w * in, out), bias(1, out) {
  if (w % 2 == 0) throw Error(Errc::DimensionMismatch, "conv kernel width must be odd");
}

namespace {

void check_conv(const Matrix& x, const ConvKernel& k) {
  if (x.cols() != k.in_channels) throw Error(Errc::DimensionMismatch, "conv1d channel mismatch");
  require(k.weights.rows() == k.width * k.in_channels && k.weights.cols() == k.out_channels &&
              k.bias.cols() == k.out_channels && k.width % 2 == 1,
          "conv1d kernel shape");
}

}  // namespace

Matrix conv1d(const Matrix& x, const ConvKernel& k) {
  check_conv(x, k);
  const std::size_t steps = x.rows(), in = k.in_channels, out = k.out_channels;
  const auto half = static_cast<std::ptrdiff_t>(k.half());
  Matrix y(steps, out);
#pragma omp parallel for schedule(static) if (steps * k.weights.size() > kParallelWork)
  for (std::size_t t = 0; t < steps; ++t) {
    std::span<double> yt = y.row(t);
    for (std::size_t o = 0; o < out; ++o) yt[o] = k.bias(0, o);
    for (std::size_t tap = 0; tap < k.width; ++tap) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + tap) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
      std::span<const double> xs = x.row(static_cast<std::size_t>(src));
      for (std::size_t c = 0; c < in; ++c) {
        const double xv = xs[c];
        std::span<const double> w = k.weights.row(tap * in + c);
        for (std::size_t o = 0; o < out; ++o) yt[o] += xv * w[o];
      }
    }
  }
  return y;
}

ConvGrads conv1d_backward(const Matrix& x, const ConvKernel& k, const Matrix& dy) {
  check_conv(x, k);
  require(dy.rows() == x.rows() && dy.cols() == k.out_channels, "conv1d backward shape");
  const std::size_t steps = x.rows(), in = k.in_channels, out = k.out_channels;
  const auto half = static_cast<std::ptrdiff_t>(k.half());
  ConvGrads g{Matrix(steps, in), Matrix(k.weights.rows(), out), column_sums(dy)};
  for (std::size_t t = 0; t < steps; ++t) {
    std::span<const double> dyt = dy.row(t);
    for (std::size_t tap = 0; tap < k.width; ++tap) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + tap) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
      const auto s = static_cast<std::size_t>(src);
      for (std::size_t c = 0; c < in; ++c) {
        std::span<const double> w = k.weights.row(tap * in + c);
        std::span<double> dw = g.dweights.row(tap * in + c);
        const double xv = x(s, c);
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) {
          acc += dyt[o] * w[o];
          dw[o] += xv * dyt[o];
        }
        g.dx(s, c) += acc;
      }
    }
  }
  return g;
}

double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }
double pi_tanh(double x) noexcept {
  // tanh rounds to ±1 for |x| ≳ 19; keep the range open.
  static const double below_pi = std::nextafter(std::numbers::pi, 0.0);
  const double y = std::numbers::pi * std::tanh(x);
  return std::clamp(y, -below_pi, below_pi);
}

Matrix relu(const Matrix& m) {
  Matrix r(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) r.values()[i] = relu(m.values()[i]);
  return r;
}

Matrix pi_tanh(const Matrix& m) {
  Matrix r(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) r.values()[i] = pi_tanh(m.values()[i]);
  return r;
}

Matrix sym_sqrt(const Matrix& s, double eps) {
  require(s.rows() == s.cols(), "sym_sqrt needs a square matrix");
  const std::size_t n = s.rows();
  double scale = 1.0;
  for (double v : s.values()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(s(i, j) - s(j, i)) > 1e-9 * scale)
        throw Error(Errc::NotSymmetric, "sym_sqrt input is not symmetric");

  Eigen::MatrixXd m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          0.5 * (s(i, j) + s(j, i)) + (i == j ? eps : 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd& vecs = solver.eigenvectors();
  Eigen::MatrixXd root = vecs * roots.asDiagonal() * vecs.transpose();

  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto ei = static_cast<Eigen::Index>(i), ej = static_cast<Eigen::Index>(j);
      out(i, j) = 0.5 * (root(ei, ej) + root(ej, ei));
    }
  return out;
}

GradReport grad_check(const std::function<double()>& loss, std::span<const GradTarget> targets,
                      double h, double tol, std::size_t max_entries_per_tensor,
                      std::uint64_t seed) {
  GradReport report;
  report.tol = tol;
  std::mt19937_64 rng(seed);
  auto eval = [&] {
    const double v = loss();
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteLoss, "loss evaluated to a non-finite value");
    return v;
  };
  for (const GradTarget& t : targets) {
    require(t.value != nullptr && t.analytic != nullptr, "grad_check target missing tensors");
    require(t.value->rows() == t.analytic->rows() && t.value->cols() == t.analytic->cols(),
            "grad_check analytic shape");
    std::vector<std::size_t> idx(t.value->size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (max_entries_per_tensor != 0 && idx.size() > max_entries_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries_per_tensor);
      std::sort(idx.begin(), idx.end());
    }
    GradReport::Entry entry{t.name, 0.0, idx.size(), true};
    for (std::size_t i : idx) {
      double& v = t.value->values()[i];
      const double orig = v;
      v = orig + h;
      const double fp = eval();
      v = orig - h;
      const double fm = eval();
      v = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = t.analytic->values()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(analytic - numeric) / denom);
    }
    entry.pass = entry.max_rel_error < tol;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

// ---------------------------------------------------------------- serial reference

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: A.cols != B.rows");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt: A.cols != B.cols");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn: A.rows != B.rows");
  Matrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.rows(); ++k) s += a(k, i) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix s(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double mx = m(r, 0);
    for (std::size_t c = 1; c < m.cols(); ++c) mx = std::max(mx, m(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) sum += (s(r, c) = std::exp(m(r, c) - mx));
    for (std::size_t c = 0; c < m.cols(); ++c) s(r, c) /= sum;
  }
  return s;
}

Matrix conv1d(const Matrix& x, const ConvKernel& k) {
  check_conv(x, k);
  const auto steps = static_cast<std::ptrdiff_t>(x.rows());
  const auto half = static_cast<std::ptrdiff_t>(k.half());
  Matrix y(x.rows(), k.out_channels);
  for (std::ptrdiff_t t = 0; t < steps; ++t)
    for (std::size_t o = 0; o < k.out_channels; ++o) {
      double s = k.bias(0, o);
      for (std::size_t tap = 0; tap < k.width; ++tap) {
        const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(tap) - half;
        if (src < 0 || src >= steps) continue;
        for (std::size_t c = 0; c < k.in_channels; ++c)
          s += x(static_cast<std::size_t>(src), c) * k.weights(tap * k.in_channels + c, o);
      }
      y(static_cast<std::size_t>(t), o) = s;
    }
  return y;
}

}  // namespace serial

}  // namespace qean
