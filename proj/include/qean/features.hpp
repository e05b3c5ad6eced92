#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qean/model.hpp"
#include "qean/quaternion.hpp"

namespace qean {

// Audio frame layout.
inline constexpr std::size_t kEnvelopeChannel = 0;
inline constexpr std::size_t kMfccBegin = 1;     // 20 channels
inline constexpr std::size_t kChromaBegin = 21;  // 12 channels
inline constexpr std::size_t kPeakChannel = 33;
inline constexpr std::size_t kBeatChannel = 34;

// Motion frame layout: joint j occupies [9j, 9j+9) as a row-major rotation
// matrix, the root translation sits at [216, 219).
inline constexpr std::size_t kJoints = 24;
inline constexpr std::size_t kTranslationBegin = 216;

/// NotUnit if any quaternion is off the unit sphere by 1e-6 or more;
/// DimensionMismatch unless there are 24 of them.
std::vector<double> encode_motion_frame(std::span<const Quaternion> rotations,
                                        const std::array<double, 3>& translation);

struct DecodedFrame {
  std::array<Quaternion, kJoints> rotations;
  std::array<double, 3> translation;
};

/// Rotation closest to `m` in Frobenius norm. Uses the polar factor
/// m·(mᵀm)^(−1/2); reflections are folded back along the weakest direction.
RotationMatrix nearest_rotation(const RotationMatrix& m);

/// Projects each block onto the rotations before conversion. DimensionMismatch
/// unless the frame has 219 values.
DecodedFrame decode_motion_frame(std::span<const double> frame);

struct SynthPair {
  Matrix audio;   // frames × 35
  Matrix motion;  // frames × 219
};

/// Beat-locked synthetic recording of round(seconds·fps) frames. Music beats
/// sit at multiples of beat_period; every joint swings about its own axis with
/// turning points half a frame before each beat, so frame-difference speed is
/// minimal exactly on the beat frames. ConfigError on seconds ≤ 0, fps = 0 or
/// beat_period < 2.
SynthPair synth_pair(std::uint64_t seed, double seconds, std::size_t fps, std::size_t beat_period);

inline constexpr const char* kStreamFormat = "qean-stream-v1";

struct StreamMeta {
  StreamKind kind = StreamKind::Motion;
  std::size_t fps = 60;
  std::size_t frames = 0;
  std::size_t dims = kMotionChannels;
};

const char* stream_kind_name(StreamKind kind) noexcept;
std::size_t stream_dims(StreamKind kind) noexcept;
StreamMeta make_meta(StreamKind kind, std::size_t frames, std::size_t fps = 60);

/// Sidecar path: `path` with ".meta" appended.
std::filesystem::path meta_path(const std::filesystem::path& path);

/// Headerless CSV plus sidecar, both written atomically. MetaMismatch when the
/// matrix disagrees with `meta`.
void save_stream(const std::filesystem::path& path, const Matrix& m, const StreamMeta& meta);

struct Stream {
  Matrix data;
  StreamMeta meta;
};
/// MalformedFile on unreadable CSV or sidecar; MetaMismatch when the sidecar,
/// the kind and the matrix disagree.
Stream load_stream(const std::filesystem::path& path);

std::string stream_to_csv(const Matrix& m);
Matrix stream_from_csv(const std::string& text, std::size_t expected_cols);
std::string meta_to_string(const StreamMeta& meta);
StreamMeta meta_from_string(const std::string& text);

}  // namespace qean
