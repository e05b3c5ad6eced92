#include "qean/qra.hpp"

#include <cmath>
#include <numbers>

namespace qean {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require(bool ok, const char* what) {
  if (!ok) throw Error(Errc::DimensionMismatch, what);
}

ConvKernel random_kernel(std::size_t in, std::size_t out, std::size_t width, std::mt19937_64& rng) {
  ConvKernel k(in, out, width);
  k.weights = random_normal(width * in, out, std::sqrt(0.5 / static_cast<double>(width * in)), rng);
  return k;
}

void accumulate(ConvKernel& grad, const ConvGrads& g) {
  grad.weights += g.dweights;
  grad.bias += g.dbias;
}

/// Rows of z as quaternion slots, each right-multiplied by
/// unit_exp(axis, angle[n]).
Matrix rotate_rows(const Matrix& z, std::span<const double> angle, Axis axis) {
  Matrix out(z.rows(), z.cols());
  const std::size_t slots = z.cols() / 4;
  for (std::size_t n = 0; n < z.rows(); ++n) {
    const Quaternion u = unit_exp(axis, angle[n]);
    auto in = z.row(n);
    auto o = out.row(n);
    for (std::size_t s = 0; s < slots; ++s) {
      const Quaternion r = hamilton({in[4 * s], in[4 * s + 1], in[4 * s + 2], in[4 * s + 3]}, u);
      o[4 * s] = r.e;
      o[4 * s + 1] = r.f;
      o[4 * s + 2] = r.g;
      o[4 * s + 3] = r.h;
    }
  }
  return out;
}

std::vector<double> period_angles(const FreqPhase& fp, std::span<const double> pos, std::size_t p) {
  std::vector<double> a(fp.omega.rows());
  for (std::size_t n = 0; n < a.size(); ++n)
    a[n] = kTwoPi * fp.omega(n, p) * pos[n] + fp.theta(n, p);
  return a;
}

struct RotationGrads {
  Matrix dz;        // gradient w.r.t. the unrotated rows
  Matrix domega;    // steps × P
  Matrix dtheta;    // steps × P
};

/// Backward through rotate_rows for every period.
RotationGrads rotation_backward(const Matrix& z, const FreqPhase& fp, std::span<const double> pos,
                                Axis axis, std::span<const Matrix> dphi) {
  const std::size_t steps = z.rows(), periods = fp.omega.cols(), slots = z.cols() / 4;
  RotationGrads g{Matrix(steps, z.cols()), Matrix(steps, periods), Matrix(steps, periods)};
  for (std::size_t p = 0; p < periods; ++p) {
    const std::vector<double> angle = period_angles(fp, pos, p);
    for (std::size_t n = 0; n < steps; ++n) {
      const Quaternion uc = q_conj(unit_exp(axis, angle[n]));
      const Quaternion du = unit_exp_derivative(axis, angle[n]);
      auto zr = z.row(n);
      auto dr = dphi[p].row(n);
      auto dzr = g.dz.row(n);
      double dangle = 0.0;
      for (std::size_t s = 0; s < slots; ++s) {
        const Quaternion zq{zr[4 * s], zr[4 * s + 1], zr[4 * s + 2], zr[4 * s + 3]};
        const Quaternion dq{dr[4 * s], dr[4 * s + 1], dr[4 * s + 2], dr[4 * s + 3]};
        const Quaternion back = hamilton(dq, uc);
        dzr[4 * s] += back.e;
        dzr[4 * s + 1] += back.f;
        dzr[4 * s + 2] += back.g;
        dzr[4 * s + 3] += back.h;
        dangle += q_dot(dq, hamilton(zq, du));
      }
      g.domega(n, p) = dangle * kTwoPi * pos[n];
      g.dtheta(n, p) = dangle;
    }
  }
  return g;
}

/// Back through ω = relu(conv(z)), θ = π·tanh(conv(z)); returns dz.
Matrix freq_phase_backward(const Matrix& z, const Matrix& pre_omega, const Matrix& pre_theta,
                           const ConvKernel& omega_kernel, const ConvKernel& theta_kernel,
                           const Matrix& domega, const Matrix& dtheta, ConvKernel& g_omega,
                           ConvKernel& g_theta) {
  Matrix dpre_omega(domega.rows(), domega.cols());
  Matrix dpre_theta(dtheta.rows(), dtheta.cols());
  for (std::size_t i = 0; i < domega.size(); ++i) {
    dpre_omega.values()[i] = pre_omega.values()[i] > 0.0 ? domega.values()[i] : 0.0;
    const double t = std::tanh(pre_theta.values()[i]);
    dpre_theta.values()[i] = dtheta.values()[i] * std::numbers::pi * (1.0 - t * t);
  }
  ConvGrads go = conv1d_backward(z, omega_kernel, dpre_omega);
  ConvGrads gt = conv1d_backward(z, theta_kernel, dpre_theta);
  accumulate(g_omega, go);
  accumulate(g_theta, gt);
  go.dx += gt.dx;
  return go.dx;
}

}  // namespace

// ---------------------------------------------------------------- params

QRAParams QRAParams::zeros(std::size_t d_model, std::size_t d_attn, std::size_t periods,
                           std::size_t conv_width) {
  QRAParams p;
  p.d_model = d_model;
  p.d_attn = d_attn;
  p.periods = periods;
  p.w_q = Matrix(d_model, d_attn);
  p.w_k = Matrix(d_model, d_attn);
  p.w_v = Matrix(d_model, d_attn);
  p.omega_q = ConvKernel(d_attn, periods, conv_width);
  p.theta_q = ConvKernel(d_attn, periods, conv_width);
  p.omega_k = ConvKernel(d_attn, periods, conv_width);
  p.theta_k = ConvKernel(d_attn, periods, conv_width);
  return p;
}

QRAParams QRAParams::random(std::size_t d_model, std::size_t d_attn, std::size_t periods,
                            std::mt19937_64& rng, std::size_t conv_width) {
  QRAParams p;
  p.d_model = d_model;
  p.d_attn = d_attn;
  p.periods = periods;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d_model));
  p.w_q = random_normal(d_model, d_attn, sd, rng);
  p.w_k = random_normal(d_model, d_attn, sd, rng);
  p.w_v = random_normal(d_model, d_attn, sd, rng);
  p.omega_q = random_kernel(d_attn, periods, conv_width, rng);
  p.theta_q = random_kernel(d_attn, periods, conv_width, rng);
  p.omega_k = random_kernel(d_attn, periods, conv_width, rng);
  p.theta_k = random_kernel(d_attn, periods, conv_width, rng);
  return p;
}

void QRAParams::validate() const {
  if (d_attn == 0 || d_attn % 4 != 0)
    throw Error(Errc::HeadDimNotQuaternion, "attention width must be a multiple of 4");
  require(periods >= 1, "QRA needs at least one period");
  for (const Matrix* w : {&w_q, &w_k, &w_v})
    require(w->rows() == d_model && w->cols() == d_attn, "QRA projection shape");
  for (const ConvKernel* k : {&omega_q, &theta_q, &omega_k, &theta_k})
    require(k->in_channels == d_attn && k->out_channels == periods, "QRA kernel shape");
}

std::vector<double> position_vector(std::size_t length) {
  std::vector<double> pos(length);
  for (std::size_t i = 0; i < length; ++i)
    pos[i] = static_cast<double>(i) / static_cast<double>(length);
  return pos;
}

FreqPhase gen_freq_phase(const Matrix& z, const ConvKernel& omega_kernel,
                         const ConvKernel& theta_kernel) {
  return {relu(conv1d(z, omega_kernel)), pi_tanh(conv1d(z, theta_kernel))};
}

std::vector<QuaternionSeries> series_rotate(const Matrix& z, const FreqPhase& fp,
                                            std::span<const double> pos, Axis axis) {
  require(z.cols() % 4 == 0 && z.cols() > 0, "series_rotate needs whole quaternions");
  require(fp.omega.rows() == z.rows() && fp.theta.rows() == z.rows() && pos.size() == z.rows() &&
              fp.omega.cols() == fp.theta.cols(),
          "series_rotate shapes");
  std::vector<QuaternionSeries> out;
  out.reserve(fp.omega.cols());
  for (std::size_t p = 0; p < fp.omega.cols(); ++p)
    out.push_back(QuaternionSeries::from_rows(rotate_rows(z, period_angles(fp, pos, p), axis)));
  return out;
}

Matrix rotary_similarity(std::span<const QuaternionSeries> phi,
                         std::span<const QuaternionSeries> psi, std::size_t d_attn) {
  require(!phi.empty() && phi.size() == psi.size(), "rotary_similarity period count");
  const std::size_t n = phi[0].steps(), m = psi[0].steps(), slots = phi[0].slots_per_step();
  for (std::size_t p = 0; p < phi.size(); ++p)
    require(phi[p].slots_per_step() == slots && psi[p].slots_per_step() == slots &&
                phi[p].steps() == n && psi[p].steps() == m,
            "rotary_similarity slot mismatch");
  const double scale =
      1.0 / (static_cast<double>(phi.size()) * std::sqrt(static_cast<double>(d_attn)));
  Matrix sim(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < phi.size(); ++p)
        for (std::size_t s = 0; s < slots; ++s)
          acc += hamilton(phi[p].at(i, s), q_conj(psi[p].at(j, s))).e;
      sim(i, j) = scale * acc;
    }
  return sim;
}

Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  Matrix logits = matmul_nt(q, k);
  logits *= 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return matmul(softmax_rows(logits), v);
}

// ---------------------------------------------------------------- single head

Matrix qra_attention(const Matrix& x, const Matrix& y, const QRAParams& params,
                     const QRAOptions& options, QRACache* cache) {
  if (options.quaternion) params.validate();
  require(x.cols() == params.d_model && y.cols() == params.d_model, "QRA input width");
  QRACache local;
  QRACache& c = cache ? *cache : local;
  c.options = options;
  c.x = x;
  c.y = y;
  c.q = matmul(x, params.w_q);
  c.k = matmul(y, params.w_k);
  c.v = matmul(y, params.w_v);

  Matrix logits;
  if (options.quaternion) {
    c.pre_omega_q = conv1d(c.q, params.omega_q);
    c.pre_theta_q = conv1d(c.q, params.theta_q);
    c.pre_omega_k = conv1d(c.k, params.omega_k);
    c.pre_theta_k = conv1d(c.k, params.theta_k);
    c.fq = {relu(c.pre_omega_q), pi_tanh(c.pre_theta_q)};
    c.fk = {relu(c.pre_omega_k), pi_tanh(c.pre_theta_k)};
    c.pos_q = position_vector(x.rows());
    c.pos_k = position_vector(y.rows());
    c.phi.clear();
    c.psi.clear();
    logits = Matrix(x.rows(), y.rows());
    for (std::size_t p = 0; p < params.periods; ++p) {
      c.phi.push_back(rotate_rows(c.q, period_angles(c.fq, c.pos_q, p), Axis::I));
      c.psi.push_back(rotate_rows(c.k, period_angles(c.fk, c.pos_k, p), options.key_axis));
      logits += matmul_nt(c.phi.back(), c.psi.back());
    }
    logits *= 1.0 / (static_cast<double>(params.periods) *
                     std::sqrt(static_cast<double>(params.d_attn)));
  } else {
    logits = matmul_nt(c.q, c.k);
    logits *= 1.0 / std::sqrt(static_cast<double>(params.d_attn));
  }
  c.attn = softmax_rows(logits);
  return matmul(c.attn, c.v);
}

InputGrads qra_attention_backward(const QRACache& c, const QRAParams& params, const Matrix& dh,
                                  QRAParams& grads) {
  require(dh.rows() == c.attn.rows() && dh.cols() == params.d_attn, "QRA backward shape");
  const Matrix dv = matmul_tn(c.attn, dh);
  const Matrix dlogits = softmax_rows_backward(c.attn, matmul_nt(dh, c.v));

  Matrix dq, dk;
  if (c.options.quaternion) {
    const double scale = 1.0 / (static_cast<double>(params.periods) *
                                std::sqrt(static_cast<double>(params.d_attn)));
    std::vector<Matrix> dphi, dpsi;
    const Matrix dlogits_t = dlogits.transposed();
    for (std::size_t p = 0; p < params.periods; ++p) {
      dphi.push_back(scale * matmul(dlogits, c.psi[p]));
      dpsi.push_back(scale * matmul(dlogits_t, c.phi[p]));
    }
    RotationGrads rq = rotation_backward(c.q, c.fq, c.pos_q, Axis::I, dphi);
    RotationGrads rk = rotation_backward(c.k, c.fk, c.pos_k, c.options.key_axis, dpsi);
    dq = std::move(rq.dz);
    dq += freq_phase_backward(c.q, c.pre_omega_q, c.pre_theta_q, params.omega_q, params.theta_q,
                              rq.domega, rq.dtheta, grads.omega_q, grads.theta_q);
    dk = std::move(rk.dz);
    dk += freq_phase_backward(c.k, c.pre_omega_k, c.pre_theta_k, params.omega_k, params.theta_k,
                              rk.domega, rk.dtheta, grads.omega_k, grads.theta_k);
  } else {
    const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_attn));
    dq = scale * matmul(dlogits, c.k);
    dk = scale * matmul_tn(dlogits, c.q);
  }

  grads.w_q += matmul_tn(c.x, dq);
  grads.w_k += matmul_tn(c.y, dk);
  grads.w_v += matmul_tn(c.y, dv);
  InputGrads out{matmul_nt(dq, params.w_q), matmul_nt(dk, params.w_k)};
  out.dy += matmul_nt(dv, params.w_v);
  return out;
}

// ---------------------------------------------------------------- multi head

MultiHeadQRAParams MultiHeadQRAParams::random(std::size_t d_model, std::size_t heads,
                                              std::size_t periods, std::mt19937_64& rng,
                                              bool require_quaternion) {
  if (heads == 0 || d_model % heads != 0)
    throw Error(Errc::DimensionMismatch, "heads must divide d_model");
  const std::size_t d_head = d_model / heads;
  if (require_quaternion && d_head % 4 != 0)
    throw Error(Errc::HeadDimNotQuaternion,
                "per-head width " + std::to_string(d_head) + " is not a multiple of 4");
  MultiHeadQRAParams m;
  for (std::size_t h = 0; h < heads; ++h)
    m.heads.push_back(QRAParams::random(d_model, d_head, periods, rng));
  m.w_o = random_normal(d_model, d_model, 1.0 / std::sqrt(static_cast<double>(d_model)), rng);
  return m;
}

MultiHeadQRAParams MultiHeadQRAParams::zeros_like(const MultiHeadQRAParams& other) {
  MultiHeadQRAParams m;
  for (const QRAParams& h : other.heads) {
    QRAParams z = QRAParams::zeros(h.d_model, h.d_attn, h.periods, h.omega_q.width);
    m.heads.push_back(std::move(z));
  }
  m.w_o = Matrix(other.w_o.rows(), other.w_o.cols());
  return m;
}

Matrix multi_head_qra(const Matrix& x, const Matrix& y, const MultiHeadQRAParams& params,
                      const QRAOptions& options, MultiHeadQRACache* cache) {
  std::size_t width = 0;
  for (const QRAParams& h : params.heads) {
    if (options.quaternion && h.d_attn % 4 != 0)
      throw Error(Errc::HeadDimNotQuaternion, "per-head width is not a multiple of 4");
    width += h.d_attn;
  }
  require(params.w_o.rows() == width, "output projection rows must equal total head width");
  Matrix concat(x.rows(), width);
  if (cache) cache->heads.assign(params.heads.size(), {});
  std::size_t col = 0;
  for (std::size_t h = 0; h < params.heads.size(); ++h) {
    concat.set_col_block(col, qra_attention(x, y, params.heads[h], options,
                                            cache ? &cache->heads[h] : nullptr));
    col += params.heads[h].d_attn;
  }
  Matrix out = matmul(concat, params.w_o);
  if (cache) cache->concat = std::move(concat);
  return out;
}

InputGrads multi_head_qra_backward(const MultiHeadQRACache& cache,
                                   const MultiHeadQRAParams& params, const Matrix& dout,
                                   MultiHeadQRAParams& grads) {
  grads.w_o += matmul_tn(cache.concat, dout);
  const Matrix dconcat = matmul_nt(dout, params.w_o);
  InputGrads total{Matrix(cache.heads.front().x.rows(), cache.heads.front().x.cols()),
                   Matrix(cache.heads.front().y.rows(), cache.heads.front().y.cols())};
  std::size_t col = 0;
  for (std::size_t h = 0; h < params.heads.size(); ++h) {
    const std::size_t w = params.heads[h].d_attn;
    InputGrads g = qra_attention_backward(cache.heads[h], params.heads[h],
                                          dconcat.col_block(col, w), grads.heads[h]);
    total.dx += g.dx;
    total.dy += g.dy;
    col += w;
  }
  return total;
}

}  // namespace qean
