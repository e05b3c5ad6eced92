#pragma once
// Independent reference evaluations used by the unit and acceptance tests.
// Nothing here calls a library kernel: every product, softmax and rotation is
// written out with plain loops so a shared bug cannot cancel out.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "qean/model.hpp"
#include "qean/qra.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;
using Quat = std::array<double, 4>;

inline Rows rows_of(const qean::Matrix& m) {
  Rows r(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

inline qean::Matrix matrix_of(const Rows& r) {
  qean::Matrix m(r.size(), r.empty() ? 0 : r[0].size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r[i].size(); ++j) m(i, j) = r[i][j];
  return m;
}

inline Rows mul(const Rows& a, const qean::Matrix& b) {
  Rows out(a.size(), std::vector<double>(b.cols(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < b.rows(); ++k) s += a[i][k] * b(k, j);
      out[i][j] = s;
    }
  return out;
}

inline Rows cols(const Rows& a, std::size_t begin, std::size_t count) {
  Rows out(a.size(), std::vector<double>(count));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < count; ++j) out[i][j] = a[i][begin + j];
  return out;
}

inline void softmax_in_place(std::vector<double>& row) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  double z = 0.0;
  for (double& v : row) z += (v = std::exp(v - mx));
  for (double& v : row) v /= z;
}

/// softmax(Q·Kᵀ/√d)·V
inline Rows attention(const Rows& q, const Rows& k, const Rows& v) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q[0].size()));
  Rows out(q.size(), std::vector<double>(v[0].size(), 0.0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<double> w(k.size());
    for (std::size_t j = 0; j < k.size(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < q[i].size(); ++c) s += q[i][c] * k[j][c];
      w[j] = s * scale;
    }
    softmax_in_place(w);
    for (std::size_t j = 0; j < k.size(); ++j)
      for (std::size_t c = 0; c < v[j].size(); ++c) out[i][c] += w[j] * v[j][c];
  }
  return out;
}

// ---------------------------------------------------------------- quaternion attention

inline Quat qmul(const Quat& a, const Quat& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

/// Same-padded 1D convolution, taps indexed t − half … t + half.
inline Rows conv(const Rows& z, const qean::ConvKernel& k) {
  const auto steps = static_cast<long>(z.size());
  const long half = static_cast<long>((k.width - 1) / 2);
  Rows out(z.size(), std::vector<double>(k.out_channels));
  for (long t = 0; t < steps; ++t)
    for (std::size_t o = 0; o < k.out_channels; ++o) {
      double s = k.bias(0, o);
      for (long tap = 0; tap < static_cast<long>(k.width); ++tap) {
        const long src = t + tap - half;
        if (src < 0 || src >= steps) continue;
        for (std::size_t c = 0; c < k.in_channels; ++c)
          s += z[static_cast<std::size_t>(src)][c] * k.weights(static_cast<std::size_t>(tap) * k.in_channels + c, o);
      }
      out[static_cast<std::size_t>(t)][o] = s;
    }
  return out;
}

/// Straight-line single-head quaternion rotary attention. `key_axis` is 1 for
/// i, 2 for j; queries always turn about i.
inline Rows qra(const qean::Matrix& x, const qean::Matrix& y, const qean::QRAParams& p,
                int key_axis = 2) {
  const Rows q = mul(rows_of(x), p.w_q), k = mul(rows_of(y), p.w_k), v = mul(rows_of(y), p.w_v);
  const Rows oq = conv(q, p.omega_q), tq = conv(q, p.theta_q);
  const Rows ok = conv(k, p.omega_k), tk = conv(k, p.theta_k);
  const std::size_t n = q.size(), m = k.size(), slots = p.d_attn / 4, periods = p.periods;
  const double pi = std::numbers::pi;
  auto turn = [&](const std::vector<double>& row, std::size_t slot, double angle, int axis) {
    Quat r{std::cos(angle), 0.0, 0.0, 0.0};
    r[static_cast<std::size_t>(axis)] = std::sin(angle);
    const Quat a{row[4 * slot], row[4 * slot + 1], row[4 * slot + 2], row[4 * slot + 3]};
    return qmul(a, r);
  };
  Rows out(n, std::vector<double>(p.d_attn, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t per = 0; per < periods; ++per) {
        const double wq = std::max(0.0, oq[i][per]), hq = pi * std::tanh(tq[i][per]);
        const double wk = std::max(0.0, ok[j][per]), hk = pi * std::tanh(tk[j][per]);
        const double aq = 2.0 * pi * wq * (static_cast<double>(i) / static_cast<double>(n)) + hq;
        const double ak = 2.0 * pi * wk * (static_cast<double>(j) / static_cast<double>(m)) + hk;
        for (std::size_t s = 0; s < slots; ++s) {
          const Quat a = turn(q[i], s, aq, 1);
          const Quat b = turn(k[j], s, ak, key_axis);
          const Quat bc{b[0], -b[1], -b[2], -b[3]};
          acc += qmul(a, bc)[0];
        }
      }
      w[j] = acc / (static_cast<double>(periods) * std::sqrt(static_cast<double>(p.d_attn)));
    }
    softmax_in_place(w);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t c = 0; c < p.d_attn; ++c) out[i][c] += w[j] * v[j][c];
  }
  return out;
}

// ---------------------------------------------------------------- canonical model

inline Rows add(Rows a, const Rows& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

inline Rows linear(const Rows& x, const qean::LinearWeights& l) {
  Rows y = mul(x, l.w);
  for (auto& row : y)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += l.b(0, j);
  return y;
}

inline Rows norm(const Rows& x, const qean::LayerNormWeights& w) {
  Rows y = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i].size());
    double mean = 0.0, var = 0.0;
    for (double v : x[i]) mean += v / d;
    for (double v : x[i]) var += (v - mean) * (v - mean) / d;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t j = 0; j < x[i].size(); ++j)
      y[i][j] = (x[i][j] - mean) * inv * w.gain(0, j) + w.bias(0, j);
  }
  return y;
}

inline Rows ffn(const Rows& x, const qean::FeedForwardWeights& w) {
  Rows h = linear(x, w.in);
  for (auto& row : h)
    for (double& v : row)
      v = 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (v + 0.044715 * v * v * v)));
  return linear(h, w.out);
}

inline Rows multi_head(const Rows& xq, const Rows& xkv, const qean::Matrix& wq,
                       const qean::Matrix& wk, const qean::Matrix& wv, std::size_t heads) {
  const Rows q = mul(xq, wq), k = mul(xkv, wk), v = mul(xkv, wv);
  const std::size_t dh = q[0].size() / heads;
  Rows cat(xq.size(), std::vector<double>(q[0].size()));
  for (std::size_t h = 0; h < heads; ++h) {
    const Rows o = attention(cols(q, h * dh, dh), cols(k, h * dh, dh), cols(v, h * dh, dh));
    for (std::size_t i = 0; i < o.size(); ++i)
      for (std::size_t c = 0; c < dh; ++c) cat[i][h * dh + c] = o[i][c];
  }
  return cat;
}

/// Transformer with plain scaled dot-product attention everywhere, reading the
/// same weight tensors as the library model. Valid for use_spe = use_qra =
/// false and no dropout.
inline qean::Matrix canonical_predict(const qean::Matrix& seed, const qean::Matrix& audio,
                                      const qean::ModelWeights& w, const qean::ModelConfig& cfg) {
  auto embed = [&](const qean::Matrix& frames, const qean::LinearWeights& l,
                   const qean::Matrix& pos) {
    Rows h = linear(rows_of(frames), l);
    if (cfg.use_learned_abs_pos)
      for (std::size_t i = 0; i < h.size(); ++i)
        for (std::size_t j = 0; j < h[i].size(); ++j) h[i][j] += pos(i, j);
    return h;
  };
  auto encoder = [&](Rows h, const std::vector<qean::EncoderLayerWeights>& layers) {
    for (const auto& l : layers) {
      const Rows a = norm(h, l.norm_attn);
      h = add(h, mul(multi_head(a, a, l.attn.w_q, l.attn.w_k, l.attn.w_v, cfg.heads), l.attn.w_o));
      h = add(h, ffn(norm(h, l.norm_ffn), l.ffn));
    }
    return h;
  };
  const Rows em = encoder(embed(seed, w.motion_embed, w.motion_pos), w.motion_encoder);
  const Rows ea = encoder(embed(audio, w.audio_embed, w.audio_pos), w.audio_encoder);
  Rows memory = em;
  memory.insert(memory.end(), ea.begin(), ea.end());

  Rows x = em;
  for (const auto& l : w.decoder) {
    const Rows a = norm(x, l.norm_query), m = norm(memory, l.norm_memory);
    const std::size_t heads = l.cross.heads.size();
    Rows cat(a.size());
    for (std::size_t h = 0; h < heads; ++h) {
      const auto& hp = l.cross.heads[h];
      const Rows o = attention(mul(a, hp.w_q), mul(m, hp.w_k), mul(m, hp.w_v));
      for (std::size_t i = 0; i < o.size(); ++i) cat[i].insert(cat[i].end(), o[i].begin(), o[i].end());
    }
    x = add(x, mul(cat, l.cross.w_o));
    x = add(x, ffn(norm(x, l.norm_ffn), l.ffn));
  }
  const Rows last = norm(Rows{x.back()}, w.final_norm);
  const Rows flat = linear(last, w.readout);
  qean::Matrix out(cfg.future_frames, qean::kMotionChannels);
  for (std::size_t n = 0; n < cfg.future_frames; ++n)
    for (std::size_t c = 0; c < qean::kMotionChannels; ++c) {
      out(n, c) = flat[0][n * qean::kMotionChannels + c];
      if (cfg.readout_residual) out(n, c) += seed(seed.rows() - 1, c);
    }
  return out;
}

inline double max_abs_diff(const Rows& a, const qean::Matrix& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) e = std::max(e, std::abs(a[i][j] - b(i, j)));
  return e;
}

}  // namespace oracle
