#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qean/numerics.hpp"
#include "qean/qra.hpp"
#include "qean/spe.hpp"

namespace qean {

inline constexpr std::size_t kAudioChannels = 35;
inline constexpr std::size_t kMotionChannels = 219;

enum class StreamKind { Audio, Motion };

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  /// Heads of the cross-modal decoder; 0 means `heads`.
  std::size_t decoder_heads = 0;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 1;
  std::size_t d_ff = 128;
  std::size_t periods = 2;
  std::size_t seed_motion_frames = 30;
  std::size_t audio_frames = 60;
  std::size_t future_frames = 5;
  std::size_t fps = 60;
  bool use_learned_abs_pos = true;
  bool use_spe = true;
  bool use_qra = true;
  /// Rotate keys about i instead of j.
  bool qra_same_axis = false;
  /// Predictions are offsets from the last seed frame.
  bool readout_residual = true;
  double rotary_base = 10000.0;
  double dropout = 0.0;

  static ModelConfig desk();
  static ModelConfig paper();

  std::size_t effective_decoder_heads() const noexcept {
    return decoder_heads == 0 ? heads : decoder_heads;
  }
  /// ConfigError on violated invariants.
  void validate() const;
};

struct LinearWeights {
  Matrix w;  // in × out
  Matrix b;  // 1 × out
};

struct LayerNormWeights {
  Matrix gain;  // 1 × d
  Matrix bias;  // 1 × d
};

struct SelfAttentionWeights {
  Matrix w_q, w_k, w_v, w_o;  // d × d
};

struct FeedForwardWeights {
  LinearWeights in;   // d → d_ff
  LinearWeights out;  // d_ff → d
};

struct EncoderLayerWeights {
  LayerNormWeights norm_attn, norm_ffn;
  SelfAttentionWeights attn;
  FeedForwardWeights ffn;
};

struct DecoderLayerWeights {
  LayerNormWeights norm_query, norm_memory, norm_ffn;
  MultiHeadQRAParams cross;
  FeedForwardWeights ffn;
};

struct ModelWeights {
  LinearWeights audio_embed, motion_embed;
  Matrix audio_pos, motion_pos;  // frames × d_model
  std::vector<EncoderLayerWeights> audio_encoder, motion_encoder;
  std::vector<DecoderLayerWeights> decoder;
  LayerNormWeights final_norm;
  LinearWeights readout;  // d_model → future_frames·219
};

/// Seeded initialization; biases and position tables start at zero, layer-norm
/// gains at one.
ModelWeights init_weights(const ModelConfig& config, std::uint64_t seed);
/// Same shapes as `w`, every entry zero.
ModelWeights zeros_like(const ModelWeights& w);

struct NamedTensor {
  std::string name;
  Matrix* tensor;
};
struct ConstNamedTensor {
  std::string name;
  const Matrix* tensor;
};
/// Every trainable tensor in a fixed order with a stable dotted name.
std::vector<NamedTensor> named_tensors(ModelWeights& w);
std::vector<ConstNamedTensor> named_tensors(const ModelWeights& w);
std::size_t parameter_count(const ModelWeights& w);

/// Training-time switches for a forward pass.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // dropout masks; required when dropout > 0 in training
};

/// Linear frame embedding plus the learned position table when enabled.
/// ChannelMismatch unless audio has 35 and motion 219 channels.
Matrix embed_stream(const Matrix& frames, StreamKind which, const ModelWeights& weights,
                    const ModelConfig& config);

/// Pre-norm self-attention encoder stack; with use_spe the logits are rotary.
Matrix encode(const Matrix& hidden, std::span<const EncoderLayerWeights> layers,
              const ModelConfig& config);

/// Motion encodings attend to the time-concatenated motion‖audio encodings;
/// the last query row is read out into future_frames × 219. `anchor` is the
/// last seed frame, added back when readout_residual is set.
Matrix cross_modal_decode(const Matrix& h_motion, const Matrix& h_audio,
                          std::span<const double> anchor, const ModelWeights& weights,
                          const ModelConfig& config);

/// embed → encode → decode for one (seed motion, audio window) pair.
Matrix predict(const Matrix& seed_motion, const Matrix& audio, const ModelWeights& weights,
               const ModelConfig& config);

/// Everything the backward pass needs; opaque outside model.cpp.
struct ModelCache;
struct ModelCacheDeleter {
  void operator()(ModelCache* c) const noexcept;
};
using ModelCachePtr = std::unique_ptr<ModelCache, ModelCacheDeleter>;

/// predict() that also records intermediates.
Matrix forward(const Matrix& seed_motion, const Matrix& audio, const ModelWeights& weights,
               const ModelConfig& config, const ForwardContext& ctx, ModelCachePtr& cache);

/// Accumulates d(loss)/d(weights) into `grads` given d(loss)/d(prediction).
void backward(const ModelCache& cache, const Matrix& dprediction, const ModelWeights& weights,
              const ModelConfig& config, ModelWeights& grads);

/// Keep-first autoregression: each step predicts future_frames frames, keeps
/// only the first, appends it to the seed window and slides the audio window
/// by one frame. Audio frame 0 is aligned with seed frame 0. AudioTooShort when
/// the audio cannot cover `steps` windows.
Matrix autoregressive_generate(const Matrix& seed_motion, const Matrix& audio, std::size_t steps,
                               const ModelWeights& weights, const ModelConfig& config);

/// Audio frames autoregressive_generate needs for `steps` steps.
std::size_t required_audio_frames(const ModelConfig& config, std::size_t steps) noexcept;

// Checkpoint: JSON document {format: "qean-ckpt-v1", config: {...},
// tensors: {name: {shape: [r, c], values: [...]}}}.
inline constexpr const char* kCheckpointFormat = "qean-ckpt-v1";

std::string checkpoint_to_string(const ModelConfig& config, const ModelWeights& weights);
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelWeights& weights);
struct Checkpoint {
  ModelConfig config;
  ModelWeights weights;
};
/// MalformedFile on a bad document or shapes that disagree with the config.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint checkpoint_from_string(const std::string& text);

}  // namespace qean
