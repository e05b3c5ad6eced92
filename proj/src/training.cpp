#include "qean/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "qean/io.hpp"

namespace qean {

TrainConfig TrainConfig::desk() { return {}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.batch_size = 16;
  c.decay = {{90000, 1e-5}, {150000, 1e-6}};
  c.total_steps = 500000;
  return c;
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(Errc::ConfigError, what);
  };
  need(batch_size >= 1, "batch_size must be positive");
  need(lr_init >= 0.0, "lr_init must be nonnegative");
  double prev_lr = lr_init;
  for (std::size_t i = 0; i < decay.size(); ++i) {
    need(i == 0 || decay[i].step > decay[i - 1].step, "decay steps must strictly increase");
    need(decay[i].lr > 0.0 && decay[i].lr < prev_lr, "decayed rates must be positive and decreasing");
    prev_lr = decay[i].lr;
  }
  need(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "adam betas must lie in [0, 1)");
  need(adam_eps > 0.0, "adam_eps must be positive");
  need(clip_norm >= 0.0, "clip_norm must be nonnegative");
}

double l2_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error(Errc::DimensionMismatch, "prediction and target shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.values()[i] - target.values()[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

Matrix l2_loss_grad(const Matrix& pred, const Matrix& target) {
  Matrix g = pred - target;
  g *= 2.0 / static_cast<double>(pred.size());
  return g;
}

double lr_at(std::size_t step, const TrainConfig& config) {
  double lr = config.lr_init;
  for (const DecayPoint& p : config.decay)
    if (step >= p.step) lr = p.lr;
  return lr;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               OptimizerState& state, double lr, const TrainConfig& config) {
  if (params.size() != grads.size())
    throw Error(Errc::DimensionMismatch, "parameter and gradient lists differ in length");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols())
      throw Error(Errc::DimensionMismatch, "gradient shape differs from its parameter");
    if (!grads[i]->all_finite()) throw Error(Errc::NonFiniteGradient, "gradient has NaN or inf");
  }
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  } else if (state.m.size() != params.size()) {
    throw Error(Errc::DimensionMismatch, "optimizer state belongs to another parameter list");
  }
  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i]->values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.adam_eps);
    }
  }
}

void adam_step(ModelWeights& weights, const ModelWeights& grads, OptimizerState& state, double lr,
               const TrainConfig& config) {
  std::vector<Matrix*> p;
  std::vector<const Matrix*> g;
  for (NamedTensor& t : named_tensors(weights)) p.push_back(t.tensor);
  for (const ConstNamedTensor& t : named_tensors(grads)) g.push_back(t.tensor);
  adam_step(p, g, state, lr, config);
}

double clip_global_norm(ModelWeights& grads, double max_norm) {
  auto tensors = named_tensors(grads);
  double sq = 0.0;
  for (const NamedTensor& t : tensors)
    for (double v : t.tensor->values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (NamedTensor& t : tensors) *t.tensor *= s;
  }
  return norm;
}

std::vector<Window> enumerate_windows(std::span<const TrainingPair> data,
                                      const ModelConfig& config) {
  std::vector<Window> out;
  const std::size_t motion_len = config.seed_motion_frames + config.future_frames;
  for (std::size_t p = 0; p < data.size(); ++p) {
    const TrainingPair& pair = data[p];
    if (pair.audio.cols() != kAudioChannels || pair.motion.cols() != kMotionChannels)
      throw Error(Errc::ChannelMismatch, "training pair " + std::to_string(p) + " has wrong channels");
    for (std::size_t s = 0;
         s + motion_len <= pair.motion.rows() && s + config.audio_frames <= pair.audio.rows(); ++s)
      out.push_back({p, s});
  }
  return out;
}

WindowTensors window_tensors(std::span<const TrainingPair> data, const Window& w,
                             const ModelConfig& config) {
  const TrainingPair& pair = data[w.pair];
  return {pair.motion.row_block(w.start, config.seed_motion_frames),
          pair.audio.row_block(w.start, config.audio_frames),
          pair.motion.row_block(w.start + config.seed_motion_frames, config.future_frames)};
}

double mean_window_loss(const ModelWeights& weights, std::span<const TrainingPair> data,
                        std::span<const Window> windows, const ModelConfig& config) {
  if (windows.empty()) return 0.0;
  std::vector<double> losses(windows.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const WindowTensors t = window_tensors(data, windows[i], config);
    losses[i] = l2_loss(predict(t.seed, t.audio, weights, config), t.target);
  }
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(windows.size());
}

double train_step(ModelWeights& weights, OptimizerState& state, std::span<const TrainingPair> data,
                  std::span<const Window> batch, const ModelConfig& model_config,
                  const TrainConfig& config, std::size_t step) {
  const std::size_t n = batch.size();
  std::vector<ModelWeights> item_grads(n);
  std::vector<double> losses(n);
  const bool training = model_config.dropout > 0.0;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const WindowTensors t = window_tensors(data, batch[i], model_config);
    std::seed_seq seq{config.rng_seed, static_cast<std::uint64_t>(step),
                      static_cast<std::uint64_t>(i)};
    std::mt19937_64 rng(seq);
    ModelCachePtr cache;
    const Matrix pred =
        forward(t.seed, t.audio, weights, model_config, {training, &rng}, cache);
    losses[i] = l2_loss(pred, t.target);
    item_grads[i] = zeros_like(weights);
    backward(*cache, l2_loss_grad(pred, t.target), weights, model_config, item_grads[i]);
  }
  double loss = 0.0;
  for (double l : losses) loss += l;
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw Error(Errc::NonFiniteLoss, "minibatch loss at step " + std::to_string(step));

  ModelWeights grads = std::move(item_grads[0]);
  {
    auto dst = named_tensors(grads);
    for (std::size_t i = 1; i < n; ++i) {
      const auto src = named_tensors(std::as_const(item_grads[i]));
      for (std::size_t k = 0; k < dst.size(); ++k) *dst[k].tensor += *src[k].tensor;
    }
    for (NamedTensor& t : dst) *t.tensor *= 1.0 / static_cast<double>(n);
  }
  clip_global_norm(grads, config.clip_norm);
  adam_step(weights, grads, state, lr_at(step, config), config);
  return loss;
}

std::vector<TraceRow> train(ModelWeights& weights, std::span<const TrainingPair> data,
                            const ModelConfig& model_config, const TrainConfig& config,
                            const std::function<void(const TraceRow&)>& on_step) {
  model_config.validate();
  config.validate();
  const std::vector<Window> windows = enumerate_windows(data, model_config);
  if (windows.empty()) throw Error(Errc::TooFewFrames, "no training window fits the data");

  std::mt19937_64 rng(config.rng_seed);
  std::vector<Window> order = windows;
  std::size_t cursor = order.size();
  OptimizerState state;
  std::vector<TraceRow> trace;
  trace.reserve(config.total_steps);
  std::vector<Window> batch;
  for (std::size_t step = 0; step < config.total_steps; ++step) {
    batch.clear();
    while (batch.size() < config.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    const double loss = train_step(weights, state, data, batch, model_config, config, step);
    trace.push_back({step, lr_at(step, config), loss});
    if (on_step) on_step(trace.back());
  }
  return trace;
}

std::string loss_trace_csv(std::span<const TraceRow> trace) {
  std::string out = "step,lr,loss\n";
  for (const TraceRow& r : trace)
    out += std::to_string(r.step) + "," + format_double(r.lr) + "," + format_double(r.loss) + "\n";
  return out;
}

}  // namespace qean
