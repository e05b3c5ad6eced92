#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qean/numerics.hpp"

namespace qean {

/// Channels sampled by dynamic_features: 0, 14, 28, …, 210.
inline constexpr std::size_t kDynamicChannels = 16;
inline constexpr std::size_t kDynamicStride = 14;
inline constexpr std::size_t kDynamicDims = 4 * kDynamicChannels;
inline constexpr std::size_t kGeometricDims = 32;

/// [velocity means | velocity stds | acceleration means | acceleration stds]
/// over the sampled channels, with population standard deviations.
/// TooFewFrames below 3 frames.
std::vector<double> dynamic_features(const Matrix& motion);

/// 32 boolean predicates, each 0 or 1:
///   0–23  joint j: mean rotation-matrix trace > 2.5 (within ~41° of rest)
///   24–26 root translation x/y/z: mean > 0
///   27–29 root translation x/y/z: max − min > 0.5
///   30    mean frame speed > 0.05
///   31    speed exceeds its sequence mean on more than half of the frames
/// Speed is motion_velocity; predicates 30–31 are 0 for a single frame.
std::vector<double> geometric_features(const Matrix& motion);

/// items × dim; one feature vector per row.
using FeatureSet = Matrix;
FeatureSet feature_set(std::span<const std::vector<double>> vectors);

/// Fréchet distance between Gaussian fits with unbiased covariances plus
/// eps·I. Negative roundoff is clamped to 0. DimensionMismatch, TooFewItems.
double fid(const FeatureSet& a, const FeatureSet& b, double eps = 1e-6);

/// Mean Euclidean distance over unordered pairs. TooFewItems below 2.
double diversity(const FeatureSet& s);

struct BeatTimeline {
  std::vector<std::int64_t> frames;  // strictly increasing
  std::size_t fps = 60;
};

/// v[t] = ‖x_t − x_{t−1}‖ for t ≥ 1, and v[0] = v[1]. TooFewFrames below 2.
std::vector<double> motion_velocity(const Matrix& motion);
/// Strict interior local minima of a speed profile.
std::vector<std::int64_t> strict_local_minima(std::span<const double> v);
/// Strict local minima of motion_velocity. TooFewFrames below 3 frames.
BeatTimeline motion_beats(const Matrix& motion, std::size_t fps = 60);
/// Frames whose beat channel exceeds 0.5. ChannelMismatch unless 35 channels.
BeatTimeline music_beats(const Matrix& audio, std::size_t fps = 60);

/// Mean over motion beats of exp(−d²/(2α²)), d the frame distance to the
/// nearest music beat. EmptyMotionBeats, EmptyMusicBeats.
double beat_align(const BeatTimeline& motion_b, const BeatTimeline& music_b, double alpha = 3.0);

struct EvalInput {
  std::vector<Matrix> reference;      // motion streams
  std::vector<Matrix> generated;      // motion streams
  std::vector<Matrix> generated_audio;  // paired with `generated`; needed for beat_align
};

/// Metrics by name: fid_k, fid_g, dist_k, dist_g, beat_align. `metrics` picks
/// from {fid, dist, beat_align}. Item counts are always included.
std::map<std::string, double> evaluate(const EvalInput& input, std::span<const std::string> metrics);
/// `key: value` lines with a comment naming the feature family of each key.
std::string eval_report(const std::map<std::string, double>& values);

}  // namespace qean
