#include "qean/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qean/io.hpp"

namespace qean {

namespace {

constexpr double kNormEps = 1e-5;

void config_error(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::ConfigError, what);
}

// ---------------------------------------------------------------- layers

Matrix add_bias(Matrix y, const Matrix& b) {
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < y.cols(); ++c) row[c] += b(0, c);
  }
  return y;
}

Matrix linear(const LinearWeights& l, const Matrix& x) { return add_bias(matmul(x, l.w), l.b); }

Matrix linear_backward(const LinearWeights& l, const Matrix& x, const Matrix& dy,
                       LinearWeights& g) {
  g.w += matmul_tn(x, dy);
  g.b += column_sums(dy);
  return matmul_nt(dy, l.w);
}

struct NormCache {
  Matrix xhat;
  std::vector<double> inv_std;
};

Matrix layer_norm(const LayerNormWeights& w, const Matrix& x, NormCache* cache) {
  const std::size_t d = x.cols();
  Matrix y(x.rows(), d);
  NormCache local;
  NormCache& c = cache ? *cache : local;
  c.xhat = Matrix(x.rows(), d);
  c.inv_std.assign(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    c.inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (xr[j] - mean) * inv;
      c.xhat(r, j) = xh;
      y(r, j) = xh * w.gain(0, j) + w.bias(0, j);
    }
  }
  return y;
}

Matrix layer_norm_backward(const LayerNormWeights& w, const NormCache& c, const Matrix& dy,
                           LayerNormWeights& g) {
  const std::size_t d = dy.cols();
  const double dd = static_cast<double>(d);
  Matrix dx(dy.rows(), d);
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double sum = 0.0, sum_xh = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      g.gain(0, j) += dy(r, j) * c.xhat(r, j);
      g.bias(0, j) += dy(r, j);
      dxhat[j] = dy(r, j) * w.gain(0, j);
      sum += dxhat[j];
      sum_xh += dxhat[j] * c.xhat(r, j);
    }
    for (std::size_t j = 0; j < d; ++j)
      dx(r, j) = c.inv_std[r] / dd * (dd * dxhat[j] - sum - c.xhat(r, j) * sum_xh);
  }
  return dx;
}

constexpr double kGeluK = 0.7978845608028654;  // √(2/π)
constexpr double kGeluC = 0.044715;

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluK * (x + kGeluC * x * x * x)));
}

double gelu_grad(double x) {
  const double t = std::tanh(kGeluK * (x + kGeluC * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * kGeluC * x * x);
}

struct FeedForwardCache {
  Matrix x, pre, act;
};

Matrix feed_forward(const FeedForwardWeights& w, const Matrix& x, FeedForwardCache* cache) {
  Matrix pre = linear(w.in, x);
  Matrix act(pre.rows(), pre.cols());
  for (std::size_t i = 0; i < pre.size(); ++i) act.values()[i] = gelu(pre.values()[i]);
  Matrix y = linear(w.out, act);
  if (cache) *cache = {x, std::move(pre), std::move(act)};
  return y;
}

Matrix feed_forward_backward(const FeedForwardWeights& w, const FeedForwardCache& c,
                             const Matrix& dy, FeedForwardWeights& g) {
  Matrix dact = linear_backward(w.out, c.act, dy, g.out);
  for (std::size_t i = 0; i < dact.size(); ++i) dact.values()[i] *= gelu_grad(c.pre.values()[i]);
  return linear_backward(w.in, c.x, dact, g.in);
}

/// Inverted dropout; an empty mask means identity.
Matrix dropout(Matrix x, double rate, const ForwardContext& ctx, Matrix* mask) {
  if (!ctx.training || rate <= 0.0) return x;
  if (!ctx.rng) throw Error(Errc::ConfigError, "dropout in training needs an rng");
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix m(x.rows(), x.cols());
  for (double& v : m.values()) v = keep(*ctx.rng) ? 1.0 / (1.0 - rate) : 0.0;
  x = hadamard(x, m);
  if (mask) *mask = std::move(m);
  return x;
}

Matrix dropout_backward(const Matrix& dy, const Matrix& mask) {
  return mask.empty() ? dy : hadamard(dy, mask);
}

struct SelfAttentionCache {
  Matrix x, v;
  std::vector<Matrix> qr, kr, attn;  // per head, rotated when SPE is on
  Matrix concat;
};

Matrix self_attention(const SelfAttentionWeights& w, const Matrix& x, const ModelConfig& config,
                      SelfAttentionCache* cache) {
  const std::size_t heads = config.heads, dh = config.d_model / heads;
  const Matrix q = matmul(x, w.w_q), k = matmul(x, w.w_k), v = matmul(x, w.w_v);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix concat(x.rows(), config.d_model);
  if (cache) {
    cache->qr.clear();
    cache->kr.clear();
    cache->attn.clear();
  }
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix qh = q.col_block(h * dh, dh), kh = k.col_block(h * dh, dh);
    if (config.use_spe) {
      const RotarySchedule sched(dh, config.rotary_base);
      qh = rope_rotate_rows(qh, sched, 0);
      kh = rope_rotate_rows(kh, sched, 0);
    }
    Matrix logits = matmul_nt(qh, kh);
    logits *= scale;
    Matrix a = softmax_rows(logits);
    concat.set_col_block(h * dh, matmul(a, v.col_block(h * dh, dh)));
    if (cache) {
      cache->qr.push_back(std::move(qh));
      cache->kr.push_back(std::move(kh));
      cache->attn.push_back(std::move(a));
    }
  }
  Matrix out = matmul(concat, w.w_o);
  if (cache) {
    cache->x = x;
    cache->v = v;
    cache->concat = std::move(concat);
  }
  return out;
}

Matrix self_attention_backward(const SelfAttentionWeights& w, const SelfAttentionCache& c,
                               const Matrix& dout, const ModelConfig& config,
                               SelfAttentionWeights& g) {
  const std::size_t heads = config.heads, dh = config.d_model / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  g.w_o += matmul_tn(c.concat, dout);
  const Matrix dconcat = matmul_nt(dout, w.w_o);
  Matrix dq(c.x.rows(), config.d_model), dk(c.x.rows(), config.d_model),
      dv(c.x.rows(), config.d_model);
  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix doh = dconcat.col_block(h * dh, dh);
    const Matrix vh = c.v.col_block(h * dh, dh);
    dv.set_col_block(h * dh, matmul_tn(c.attn[h], doh));
    const Matrix dlogits = scale * softmax_rows_backward(c.attn[h], matmul_nt(doh, vh));
    Matrix dqh = matmul(dlogits, c.kr[h]);
    Matrix dkh = matmul_tn(dlogits, c.qr[h]);
    if (config.use_spe) {
      const RotarySchedule sched(dh, config.rotary_base);
      dqh = rope_rotate_rows(dqh, sched, 0, true);
      dkh = rope_rotate_rows(dkh, sched, 0, true);
    }
    dq.set_col_block(h * dh, dqh);
    dk.set_col_block(h * dh, dkh);
  }
  g.w_q += matmul_tn(c.x, dq);
  g.w_k += matmul_tn(c.x, dk);
  g.w_v += matmul_tn(c.x, dv);
  Matrix dx = matmul_nt(dq, w.w_q);
  dx += matmul_nt(dk, w.w_k);
  dx += matmul_nt(dv, w.w_v);
  return dx;
}

struct EncoderLayerCache {
  NormCache norm_attn, norm_ffn;
  SelfAttentionCache attn;
  FeedForwardCache ffn;
  Matrix drop_attn, drop_ffn;
};

Matrix encoder_layer(const EncoderLayerWeights& w, const Matrix& x, const ModelConfig& config,
                     const ForwardContext& ctx, EncoderLayerCache* c) {
  Matrix a = layer_norm(w.norm_attn, x, c ? &c->norm_attn : nullptr);
  Matrix x1 = x + dropout(self_attention(w.attn, a, config, c ? &c->attn : nullptr),
                          config.dropout, ctx, c ? &c->drop_attn : nullptr);
  Matrix b = layer_norm(w.norm_ffn, x1, c ? &c->norm_ffn : nullptr);
  return x1 + dropout(feed_forward(w.ffn, b, c ? &c->ffn : nullptr), config.dropout, ctx,
                      c ? &c->drop_ffn : nullptr);
}

Matrix encoder_layer_backward(const EncoderLayerWeights& w, const EncoderLayerCache& c,
                              const Matrix& dout, const ModelConfig& config,
                              EncoderLayerWeights& g) {
  Matrix dx1 = dout;
  dx1 += layer_norm_backward(
      w.norm_ffn, c.norm_ffn,
      feed_forward_backward(w.ffn, c.ffn, dropout_backward(dout, c.drop_ffn), g.ffn), g.norm_ffn);
  Matrix dx = dx1;
  dx += layer_norm_backward(
      w.norm_attn, c.norm_attn,
      self_attention_backward(w.attn, c.attn, dropout_backward(dx1, c.drop_attn), config, g.attn),
      g.norm_attn);
  return dx;
}

struct DecoderLayerCache {
  NormCache norm_query, norm_memory, norm_ffn;
  MultiHeadQRACache cross;
  FeedForwardCache ffn;
  Matrix drop_cross, drop_ffn;
};

QRAOptions qra_options(const ModelConfig& config) {
  return {config.qra_same_axis ? Axis::I : Axis::J, config.use_qra};
}

Matrix decoder_layer(const DecoderLayerWeights& w, const Matrix& x, const Matrix& memory,
                     const ModelConfig& config, const ForwardContext& ctx, DecoderLayerCache* c) {
  Matrix a = layer_norm(w.norm_query, x, c ? &c->norm_query : nullptr);
  Matrix m = layer_norm(w.norm_memory, memory, c ? &c->norm_memory : nullptr);
  Matrix x1 = x + dropout(multi_head_qra(a, m, w.cross, qra_options(config),
                                         c ? &c->cross : nullptr),
                          config.dropout, ctx, c ? &c->drop_cross : nullptr);
  Matrix b = layer_norm(w.norm_ffn, x1, c ? &c->norm_ffn : nullptr);
  return x1 + dropout(feed_forward(w.ffn, b, c ? &c->ffn : nullptr), config.dropout, ctx,
                      c ? &c->drop_ffn : nullptr);
}

/// Returns d/dx; adds d/dmemory into `dmemory`.
Matrix decoder_layer_backward(const DecoderLayerWeights& w, const DecoderLayerCache& c,
                              const Matrix& dout, DecoderLayerWeights& g, Matrix& dmemory) {
  Matrix dx1 = dout;
  dx1 += layer_norm_backward(
      w.norm_ffn, c.norm_ffn,
      feed_forward_backward(w.ffn, c.ffn, dropout_backward(dout, c.drop_ffn), g.ffn), g.norm_ffn);
  InputGrads cross =
      multi_head_qra_backward(c.cross, w.cross, dropout_backward(dx1, c.drop_cross), g.cross);
  dmemory += layer_norm_backward(w.norm_memory, c.norm_memory, cross.dy, g.norm_memory);
  Matrix dx = dx1;
  dx += layer_norm_backward(w.norm_query, c.norm_query, cross.dx, g.norm_query);
  return dx;
}

// ---------------------------------------------------------------- init helpers

LinearWeights init_linear(std::size_t in, std::size_t out, double scale, std::mt19937_64& rng) {
  return {random_normal(in, out, scale / std::sqrt(static_cast<double>(in)), rng), Matrix(1, out)};
}

LayerNormWeights init_norm(std::size_t d) { return {Matrix(1, d, 1.0), Matrix(1, d)}; }

EncoderLayerWeights init_encoder_layer(const ModelConfig& c, std::mt19937_64& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(c.d_model));
  return {init_norm(c.d_model),
          init_norm(c.d_model),
          {random_normal(c.d_model, c.d_model, sd, rng), random_normal(c.d_model, c.d_model, sd, rng),
           random_normal(c.d_model, c.d_model, sd, rng), random_normal(c.d_model, c.d_model, sd, rng)},
          {init_linear(c.d_model, c.d_ff, 1.0, rng), init_linear(c.d_ff, c.d_model, 1.0, rng)}};
}

template <class W, class T, class Out>
void collect(W& w, Out& out) {
  auto add = [&](std::string name, auto& m) { out.push_back(T{std::move(name), &m}); };
  auto lin = [&](const std::string& p, auto& l) {
    add(p + ".w", l.w);
    add(p + ".b", l.b);
  };
  auto norm = [&](const std::string& p, auto& n) {
    add(p + ".gain", n.gain);
    add(p + ".bias", n.bias);
  };
  auto ffn = [&](const std::string& p, auto& f) {
    lin(p + ".in", f.in);
    lin(p + ".out", f.out);
  };
  auto conv = [&](const std::string& p, auto& k) {
    add(p + ".w", k.weights);
    add(p + ".b", k.bias);
  };
  lin("audio_embed", w.audio_embed);
  lin("motion_embed", w.motion_embed);
  add("audio_pos", w.audio_pos);
  add("motion_pos", w.motion_pos);
  auto encoder = [&](const std::string& p, auto& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string q = p + "." + std::to_string(i);
      auto& l = layers[i];
      norm(q + ".norm_attn", l.norm_attn);
      norm(q + ".norm_ffn", l.norm_ffn);
      add(q + ".attn.w_q", l.attn.w_q);
      add(q + ".attn.w_k", l.attn.w_k);
      add(q + ".attn.w_v", l.attn.w_v);
      add(q + ".attn.w_o", l.attn.w_o);
      ffn(q + ".ffn", l.ffn);
    }
  };
  encoder("audio_encoder", w.audio_encoder);
  encoder("motion_encoder", w.motion_encoder);
  for (std::size_t i = 0; i < w.decoder.size(); ++i) {
    const std::string q = "decoder." + std::to_string(i);
    auto& l = w.decoder[i];
    norm(q + ".norm_query", l.norm_query);
    norm(q + ".norm_memory", l.norm_memory);
    norm(q + ".norm_ffn", l.norm_ffn);
    for (std::size_t h = 0; h < l.cross.heads.size(); ++h) {
      const std::string hp = q + ".cross.head" + std::to_string(h);
      auto& head = l.cross.heads[h];
      add(hp + ".w_q", head.w_q);
      add(hp + ".w_k", head.w_k);
      add(hp + ".w_v", head.w_v);
      conv(hp + ".omega_q", head.omega_q);
      conv(hp + ".theta_q", head.theta_q);
      conv(hp + ".omega_k", head.omega_k);
      conv(hp + ".theta_k", head.theta_k);
    }
    add(q + ".cross.w_o", l.cross.w_o);
    ffn(q + ".ffn", l.ffn);
  }
  norm("final_norm", w.final_norm);
  lin("readout", w.readout);
}

void check_stream(const Matrix& frames, StreamKind which) {
  const std::size_t want = which == StreamKind::Audio ? kAudioChannels : kMotionChannels;
  if (frames.cols() != want)
    throw Error(Errc::ChannelMismatch, "expected " + std::to_string(want) + " channels, got " +
                                           std::to_string(frames.cols()));
}

}  // namespace

// ---------------------------------------------------------------- config

ModelConfig ModelConfig::desk() { return {}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.d_model = 800;
  c.heads = 16;
  // 800/16 = 50 is not a whole number of quaternions; the cross-modal
  // decoder runs 20 heads of 40.
  c.decoder_heads = 20;
  c.d_ff = 3200;
  c.seed_motion_frames = 120;
  c.audio_frames = 240;
  c.future_frames = 20;
  return c;
}

void ModelConfig::validate() const {
  config_error(d_model > 0 && heads > 0 && d_model % heads == 0, "heads must divide d_model");
  const std::size_t dh = d_model / heads;
  config_error(!use_spe || dh % 2 == 0, "rotary attention needs an even per-head width");
  const std::size_t dec = effective_decoder_heads();
  config_error(d_model % dec == 0, "decoder heads must divide d_model");
  config_error(!use_qra || (d_model / dec) % 4 == 0,
               "quaternion attention needs a per-head width divisible by 4");
  config_error(periods >= 1, "periods must be at least 1");
  config_error(seed_motion_frames >= 1 && future_frames >= 1, "frame counts must be positive");
  config_error(audio_frames >= seed_motion_frames, "audio_frames must be >= seed_motion_frames");
  config_error(d_ff > 0, "d_ff must be positive");
  config_error(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  config_error(rotary_base > 1.0, "rotary_base must exceed 1");
}

// ---------------------------------------------------------------- weights

ModelWeights init_weights(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config.d_model;
  ModelWeights w;
  w.audio_embed = init_linear(kAudioChannels, d, 1.0, rng);
  w.motion_embed = init_linear(kMotionChannels, d, 1.0, rng);
  w.audio_pos = Matrix(config.audio_frames, d);
  w.motion_pos = Matrix(config.seed_motion_frames, d);
  for (std::size_t i = 0; i < config.encoder_layers; ++i)
    w.audio_encoder.push_back(init_encoder_layer(config, rng));
  for (std::size_t i = 0; i < config.encoder_layers; ++i)
    w.motion_encoder.push_back(init_encoder_layer(config, rng));
  for (std::size_t i = 0; i < config.decoder_layers; ++i) {
    DecoderLayerWeights l{init_norm(d), init_norm(d), init_norm(d),
                          MultiHeadQRAParams::random(d, config.effective_decoder_heads(),
                                                     config.periods, rng, config.use_qra),
                          {init_linear(d, config.d_ff, 1.0, rng), init_linear(config.d_ff, d, 1.0, rng)}};
    w.decoder.push_back(std::move(l));
  }
  w.final_norm = init_norm(d);
  w.readout = init_linear(d, config.future_frames * kMotionChannels, 0.1, rng);
  return w;
}

ModelWeights zeros_like(const ModelWeights& w) {
  ModelWeights z = w;
  for (NamedTensor& t : named_tensors(z)) t.tensor->fill(0.0);
  return z;
}

std::vector<NamedTensor> named_tensors(ModelWeights& w) {
  std::vector<NamedTensor> out;
  collect<ModelWeights, NamedTensor>(w, out);
  return out;
}

std::vector<ConstNamedTensor> named_tensors(const ModelWeights& w) {
  std::vector<ConstNamedTensor> out;
  collect<const ModelWeights, ConstNamedTensor>(w, out);
  return out;
}

std::size_t parameter_count(const ModelWeights& w) {
  std::size_t n = 0;
  for (const ConstNamedTensor& t : named_tensors(w)) n += t.tensor->size();
  return n;
}

// ---------------------------------------------------------------- forward

Matrix embed_stream(const Matrix& frames, StreamKind which, const ModelWeights& weights,
                    const ModelConfig& config) {
  check_stream(frames, which);
  const bool audio = which == StreamKind::Audio;
  Matrix h = linear(audio ? weights.audio_embed : weights.motion_embed, frames);
  if (config.use_learned_abs_pos) {
    const Matrix& table = audio ? weights.audio_pos : weights.motion_pos;
    if (frames.rows() > table.rows())
      throw Error(Errc::DimensionMismatch, "stream longer than its position table");
    h += table.row_block(0, frames.rows());
  }
  return h;
}

namespace {

Matrix encode_impl(Matrix h, std::span<const EncoderLayerWeights> layers,
                   const ModelConfig& config, const ForwardContext& ctx,
                   std::vector<EncoderLayerCache>* caches) {
  if (caches) caches->assign(layers.size(), {});
  for (std::size_t i = 0; i < layers.size(); ++i)
    h = encoder_layer(layers[i], h, config, ctx, caches ? &(*caches)[i] : nullptr);
  return h;
}

}  // namespace

Matrix encode(const Matrix& hidden, std::span<const EncoderLayerWeights> layers,
              const ModelConfig& config) {
  return encode_impl(hidden, layers, config, {}, nullptr);
}

struct ModelCache {
  Matrix seed, audio;
  std::vector<EncoderLayerCache> motion_layers, audio_layers;
  std::vector<DecoderLayerCache> decoder_layers;
  std::size_t motion_rows = 0;
  NormCache final_norm;
  Matrix final_row;
};

void ModelCacheDeleter::operator()(ModelCache* c) const noexcept { delete c; }

namespace {

Matrix decode_impl(const Matrix& h_motion, const Matrix& h_audio, std::span<const double> anchor,
                   const ModelWeights& weights, const ModelConfig& config,
                   const ForwardContext& ctx, ModelCache* cache) {
  if (h_motion.rows() == 0) throw Error(Errc::DimensionMismatch, "empty motion encoding");
  const Matrix memory = vstack(h_motion, h_audio);
  Matrix x = h_motion;
  if (cache) cache->decoder_layers.assign(weights.decoder.size(), {});
  for (std::size_t i = 0; i < weights.decoder.size(); ++i)
    x = decoder_layer(weights.decoder[i], x, memory, config, ctx,
                      cache ? &cache->decoder_layers[i] : nullptr);
  Matrix last = layer_norm(weights.final_norm, x.row_block(x.rows() - 1, 1),
                           cache ? &cache->final_norm : nullptr);
  Matrix flat = linear(weights.readout, last);
  if (cache) {
    cache->final_row = std::move(last);
    cache->motion_rows = h_motion.rows();
  }
  Matrix out(config.future_frames, kMotionChannels);
  std::copy(flat.values().begin(), flat.values().end(), out.values().begin());
  if (config.readout_residual) {
    if (anchor.size() != kMotionChannels)
      throw Error(Errc::DimensionMismatch, "anchor frame must have 219 values");
    for (std::size_t n = 0; n < out.rows(); ++n)
      for (std::size_t c = 0; c < kMotionChannels; ++c) out(n, c) += anchor[c];
  }
  return out;
}

Matrix forward_impl(const Matrix& seed_motion, const Matrix& audio, const ModelWeights& weights,
                    const ModelConfig& config, const ForwardContext& ctx, ModelCache* cache) {
  const Matrix hm = embed_stream(seed_motion, StreamKind::Motion, weights, config);
  const Matrix ha = embed_stream(audio, StreamKind::Audio, weights, config);
  const Matrix em = encode_impl(hm, weights.motion_encoder, config, ctx,
                                cache ? &cache->motion_layers : nullptr);
  const Matrix ea = encode_impl(ha, weights.audio_encoder, config, ctx,
                                cache ? &cache->audio_layers : nullptr);
  if (cache) {
    cache->seed = seed_motion;
    cache->audio = audio;
  }
  return decode_impl(em, ea, seed_motion.row(seed_motion.rows() - 1), weights, config, ctx, cache);
}

}  // namespace

Matrix cross_modal_decode(const Matrix& h_motion, const Matrix& h_audio,
                          std::span<const double> anchor, const ModelWeights& weights,
                          const ModelConfig& config) {
  return decode_impl(h_motion, h_audio, anchor, weights, config, {}, nullptr);
}

Matrix predict(const Matrix& seed_motion, const Matrix& audio, const ModelWeights& weights,
               const ModelConfig& config) {
  return forward_impl(seed_motion, audio, weights, config, {}, nullptr);
}

Matrix forward(const Matrix& seed_motion, const Matrix& audio, const ModelWeights& weights,
               const ModelConfig& config, const ForwardContext& ctx, ModelCachePtr& cache) {
  cache.reset(new ModelCache);
  return forward_impl(seed_motion, audio, weights, config, ctx, cache.get());
}

void backward(const ModelCache& c, const Matrix& dprediction, const ModelWeights& weights,
              const ModelConfig& config, ModelWeights& g) {
  if (dprediction.rows() != config.future_frames || dprediction.cols() != kMotionChannels)
    throw Error(Errc::DimensionMismatch, "prediction gradient shape");
  const Matrix dflat = Matrix::row_vector(dprediction.values());
  const Matrix dlast = layer_norm_backward(weights.final_norm, c.final_norm,
                                           linear_backward(weights.readout, c.final_row, dflat,
                                                           g.readout),
                                           g.final_norm);
  const std::size_t tm = c.motion_rows;
  const std::size_t ta = c.audio.rows();
  Matrix dx(tm, config.d_model);
  std::copy(dlast.values().begin(), dlast.values().end(), dx.row(tm - 1).begin());
  Matrix dmemory(tm + ta, config.d_model);
  for (std::size_t i = weights.decoder.size(); i-- > 0;)
    dx = decoder_layer_backward(weights.decoder[i], c.decoder_layers[i], dx, g.decoder[i], dmemory);

  Matrix dem = dx;
  dem += dmemory.row_block(0, tm);
  Matrix dea = dmemory.row_block(tm, ta);
  for (std::size_t i = weights.motion_encoder.size(); i-- > 0;)
    dem = encoder_layer_backward(weights.motion_encoder[i], c.motion_layers[i], dem, config,
                                 g.motion_encoder[i]);
  for (std::size_t i = weights.audio_encoder.size(); i-- > 0;)
    dea = encoder_layer_backward(weights.audio_encoder[i], c.audio_layers[i], dea, config,
                                 g.audio_encoder[i]);

  linear_backward(weights.motion_embed, c.seed, dem, g.motion_embed);
  linear_backward(weights.audio_embed, c.audio, dea, g.audio_embed);
  if (config.use_learned_abs_pos) {
    for (std::size_t r = 0; r < tm; ++r)
      for (std::size_t j = 0; j < config.d_model; ++j) g.motion_pos(r, j) += dem(r, j);
    for (std::size_t r = 0; r < ta; ++r)
      for (std::size_t j = 0; j < config.d_model; ++j) g.audio_pos(r, j) += dea(r, j);
  }
}

// ---------------------------------------------------------------- inference

std::size_t required_audio_frames(const ModelConfig& config, std::size_t steps) noexcept {
  return steps == 0 ? 0 : steps - 1 + config.audio_frames;
}

Matrix autoregressive_generate(const Matrix& seed_motion, const Matrix& audio, std::size_t steps,
                               const ModelWeights& weights, const ModelConfig& config) {
  check_stream(seed_motion, StreamKind::Motion);
  check_stream(audio, StreamKind::Audio);
  if (seed_motion.rows() != config.seed_motion_frames)
    throw Error(Errc::DimensionMismatch, "seed motion must have " +
                                             std::to_string(config.seed_motion_frames) + " frames");
  if (audio.rows() < required_audio_frames(config, steps))
    throw Error(Errc::AudioTooShort, "need " + std::to_string(required_audio_frames(config, steps)) +
                                         " audio frames, have " + std::to_string(audio.rows()));
  Matrix out(steps, kMotionChannels);
  Matrix window = seed_motion;
  const std::size_t len = window.rows();
  for (std::size_t s = 0; s < steps; ++s) {
    const Matrix pred = predict(window, audio.row_block(s, config.audio_frames), weights, config);
    std::copy(pred.row(0).begin(), pred.row(0).end(), out.row(s).begin());
    Matrix next(len, kMotionChannels);
    std::copy(window.values().begin() + static_cast<std::ptrdiff_t>(kMotionChannels),
              window.values().end(), next.values().begin());
    std::copy(pred.row(0).begin(), pred.row(0).end(), next.row(len - 1).begin());
    window = std::move(next);
  }
  return out;
}

}  // namespace qean
