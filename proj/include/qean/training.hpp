#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qean/model.hpp"

namespace qean {

struct DecayPoint {
  std::size_t step;
  double lr;
};

struct TrainConfig {
  std::size_t batch_size = 8;
  double lr_init = 1e-4;
  std::vector<DecayPoint> decay = {{2000, 1e-5}, {4000, 1e-6}};
  std::size_t total_steps = 5000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global-norm gradient clipping; 0 disables.
  double clip_norm = 1.0;
  std::uint64_t rng_seed = 0;

  static TrainConfig desk();
  static TrainConfig paper();
  /// ConfigError unless decay steps strictly increase and rates are positive
  /// and decreasing.
  void validate() const;
};

/// Mean of squared differences. DimensionMismatch on shape mismatch.
double l2_loss(const Matrix& pred, const Matrix& target);
/// d l2_loss / d pred
Matrix l2_loss_grad(const Matrix& pred, const Matrix& target);

/// Piecewise constant; each decayed rate applies from its boundary onward.
double lr_at(std::size_t step, const TrainConfig& config);

struct OptimizerState {
  std::vector<Matrix> m, v;
  std::size_t step = 0;
};

/// Bias-corrected Adam on parallel lists of tensors. Moments are created on
/// first use. NonFiniteGradient if any gradient entry is NaN or infinite.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               OptimizerState& state, double lr, const TrainConfig& config);
void adam_step(ModelWeights& weights, const ModelWeights& grads, OptimizerState& state, double lr,
               const TrainConfig& config);

/// Scales `grads` in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(ModelWeights& grads, double max_norm);

/// One synchronized audio/motion recording.
struct TrainingPair {
  Matrix audio;   // frames × 35
  Matrix motion;  // frames × 219
};

/// A training example: seed = motion[start, start+seed), audio =
/// audio[start, start+audio_frames), target = the next future_frames motion
/// frames after the seed.
struct Window {
  std::size_t pair;
  std::size_t start;
};

/// Every window that fits in every pair, pair-major.
std::vector<Window> enumerate_windows(std::span<const TrainingPair> data, const ModelConfig& config);

struct WindowTensors {
  Matrix seed, audio, target;
};
WindowTensors window_tensors(std::span<const TrainingPair> data, const Window& w,
                             const ModelConfig& config);

/// Mean l2_loss of the model over the given windows (no dropout).
double mean_window_loss(const ModelWeights& weights, std::span<const TrainingPair> data,
                        std::span<const Window> windows, const ModelConfig& config);

struct TraceRow {
  std::size_t step;
  double lr;
  double loss;
};

/// One optimizer step on a minibatch. Items run concurrently with their
/// own gradient buffers; buffers are summed in item order. Returns the mean
/// minibatch loss before the update.
double train_step(ModelWeights& weights, OptimizerState& state, std::span<const TrainingPair> data,
                  std::span<const Window> batch, const ModelConfig& model_config,
                  const TrainConfig& config, std::size_t step);

/// Runs total_steps steps. Windows are reshuffled each epoch with a generator
/// seeded from rng_seed. `on_step` is called after every step.
std::vector<TraceRow> train(ModelWeights& weights, std::span<const TrainingPair> data,
                            const ModelConfig& model_config, const TrainConfig& config,
                            const std::function<void(const TraceRow&)>& on_step = {});

/// `step,lr,loss` CSV with a header line.
std::string loss_trace_csv(std::span<const TraceRow> trace);

}  // namespace qean
