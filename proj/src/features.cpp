#include "qean/features.hpp"

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "qean/io.hpp"

namespace qean {

namespace {

using Mat3 = std::array<double, 9>;

Mat3 mul3(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[3 * i + j] += a[3 * i + k] * b[3 * k + j];
  return c;
}

double det3(const Mat3& m) {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Mat3 inverse3(const Mat3& m) {
  const double d = det3(m);
  Mat3 r{(m[4] * m[8] - m[5] * m[7]) / d, (m[2] * m[7] - m[1] * m[8]) / d,
         (m[1] * m[5] - m[2] * m[4]) / d, (m[5] * m[6] - m[3] * m[8]) / d,
         (m[0] * m[8] - m[2] * m[6]) / d, (m[2] * m[3] - m[0] * m[5]) / d,
         (m[3] * m[7] - m[4] * m[6]) / d, (m[1] * m[6] - m[0] * m[7]) / d,
         (m[0] * m[4] - m[1] * m[3]) / d};
  return r;
}

// Reflections and near-singular blocks: U·diag(1, 1, det)·Vᵀ.
Mat3 nearest_rotation_svd(const Mat3& m) {
  Eigen::Matrix3d a;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = m[3 * i + j];
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = svd.matrixU() * d * svd.matrixV().transpose();
  Mat3 out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[3 * i + j] = r(i, j);
  return out;
}

[[noreturn]] void malformed(const std::string& what) { throw Error(Errc::MalformedFile, what); }

}  // namespace

std::vector<double> encode_motion_frame(std::span<const Quaternion> rotations,
                                        const std::array<double, 3>& translation) {
  if (rotations.size() != kJoints)
    throw Error(Errc::DimensionMismatch, "a motion frame has 24 joint rotations");
  std::vector<double> out;
  out.reserve(kMotionChannels);
  for (const Quaternion& q : rotations) {
    const RotationMatrix r = quat_to_rotmat(q);
    out.insert(out.end(), r.begin(), r.end());
  }
  out.insert(out.end(), translation.begin(), translation.end());
  return out;
}

RotationMatrix nearest_rotation(const RotationMatrix& m) {
  if (det3(m) <= 1e-9) return nearest_rotation_svd(m);
  Matrix mtm(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m[3 * k + i] * m[3 * k + j];
      mtm(i, j) = s;
    }
  // mᵀm is symmetric up to roundoff; sym_sqrt wants it exactly so.
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < i; ++j) mtm(i, j) = mtm(j, i);
  const Matrix s = sym_sqrt(mtm);
  Mat3 s3;
  std::copy(s.values().begin(), s.values().end(), s3.begin());
  return mul3(m, inverse3(s3));
}

DecodedFrame decode_motion_frame(std::span<const double> frame) {
  if (frame.size() != kMotionChannels)
    throw Error(Errc::DimensionMismatch, "a motion frame has 219 values, got " + std::to_string(frame.size()));
  DecodedFrame out;
  for (std::size_t j = 0; j < kJoints; ++j) {
    RotationMatrix block;
    std::copy(frame.begin() + static_cast<std::ptrdiff_t>(9 * j),
              frame.begin() + static_cast<std::ptrdiff_t>(9 * j + 9), block.begin());
    out.rotations[j] = rotmat_to_quat(nearest_rotation(block));
  }
  for (std::size_t i = 0; i < 3; ++i) out.translation[i] = frame[kTranslationBegin + i];
  return out;
}

SynthPair synth_pair(std::uint64_t seed, double seconds, std::size_t fps, std::size_t beat_period) {
  if (!(seconds > 0.0)) throw Error(Errc::ConfigError, "seconds must be positive");
  if (fps == 0) throw Error(Errc::ConfigError, "fps must be positive");
  if (beat_period < 2) throw Error(Errc::ConfigError, "beat period must be at least 2 frames");
  const auto frames = static_cast<std::size_t>(std::llround(seconds * static_cast<double>(fps)));
  if (frames == 0) throw Error(Errc::ConfigError, "seconds·fps rounds to zero frames");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double pi = std::numbers::pi;
  const double T = static_cast<double>(beat_period);
  const double rate = static_cast<double>(fps);

  SynthPair out{Matrix(frames, kAudioChannels), Matrix(frames, kMotionChannels)};

  // Music: smooth seeded tones for the spectral channels.
  struct Tone {
    double amp, freq, phase;
  };
  const std::size_t spectral = kPeakChannel - kMfccBegin;
  std::vector<std::array<Tone, 3>> tones(spectral);
  for (auto& ch : tones)
    for (Tone& t : ch) t = {0.2 + 0.8 * unit(rng), 0.1 + 1.9 * unit(rng), 2.0 * pi * unit(rng)};
  const double decay = T / 4.0;
  for (std::size_t t = 0; t < frames; ++t) {
    auto row = out.audio.row(t);
    const std::size_t since = t % beat_period;
    row[kEnvelopeChannel] = std::exp(-static_cast<double>(since) / decay);
    const double time = static_cast<double>(t) / rate;
    for (std::size_t c = 0; c < spectral; ++c) {
      double v = 0.0;
      for (const Tone& tone : tones[c]) v += tone.amp * std::sin(2.0 * pi * tone.freq * time + tone.phase);
      row[kMfccBegin + c] = kMfccBegin + c < kChromaBegin ? v : 0.5 + v / 6.0;
    }
    row[kPeakChannel] = (since == 0 || since == beat_period / 2) ? 1.0 : 0.0;
    row[kBeatChannel] = since == 0 ? 1.0 : 0.0;
  }

  // Dance: joint j = base_j ⊗ exp(axis_j · φ_j(t)/2) with
  // φ_j(t) = A_j·cos(π(t + ½)/T). The swing reverses at t = kT − ½, so
  // |φ_j(t) − φ_j(t−1)| ∝ |sin(πt/T)| vanishes on beat frames.
  struct Joint {
    Quaternion base;
    std::array<double, 3> axis;
    double amp;
  };
  std::vector<Joint> joints(kJoints);
  for (Joint& j : joints) {
    Quaternion b{normal(rng), normal(rng), normal(rng), normal(rng)};
    const double nb = q_norm(b);
    j.base = q_scale(1.0 / nb, b);
    double ax = normal(rng), ay = normal(rng), az = normal(rng);
    const double na = std::sqrt(ax * ax + ay * ay + az * az);
    j.axis = {ax / na, ay / na, az / na};
    j.amp = 0.2 + 0.4 * unit(rng);
  }
  const double radius = 0.5 + 0.5 * unit(rng);
  const double circle_frames = 8.0 * T;
  std::vector<Quaternion> rotations(kJoints);
  for (std::size_t t = 0; t < frames; ++t) {
    const double tt = static_cast<double>(t);
    for (std::size_t k = 0; k < kJoints; ++k) {
      const Joint& j = joints[k];
      const double half = 0.5 * j.amp * std::cos(pi * (tt + 0.5) / T);
      const double s = std::sin(half);
      const Quaternion swing{std::cos(half), s * j.axis[0], s * j.axis[1], s * j.axis[2]};
      rotations[k] = hamilton(j.base, swing);
      rotations[k] = q_scale(1.0 / q_norm(rotations[k]), rotations[k]);
    }
    const double a = 2.0 * pi * tt / circle_frames;
    const std::vector<double> frame =
        encode_motion_frame(rotations, {radius * std::cos(a), 0.9, radius * std::sin(a)});
    std::copy(frame.begin(), frame.end(), out.motion.row(t).begin());
  }
  return out;
}

const char* stream_kind_name(StreamKind kind) noexcept {
  return kind == StreamKind::Audio ? "audio" : "motion";
}

std::size_t stream_dims(StreamKind kind) noexcept {
  return kind == StreamKind::Audio ? kAudioChannels : kMotionChannels;
}

StreamMeta make_meta(StreamKind kind, std::size_t frames, std::size_t fps) {
  return {kind, fps, frames, stream_dims(kind)};
}

std::filesystem::path meta_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".meta";
  return p;
}

std::string stream_to_csv(const Matrix& m) {
  std::string out;
  out.reserve(m.size() * 24);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

Matrix stream_from_csv(const std::string& text, std::size_t expected_cols) {
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    if (line.empty()) continue;
    std::size_t n = 0;
    const char* p = line.data();
    const char* stop = line.data() + line.size();
    while (true) {
      double v;
      auto [next, ec] = std::from_chars(p, stop, v);
      if (ec != std::errc() || !std::isfinite(v))
        malformed("row " + std::to_string(rows + 1) + " holds a non-numeric or non-finite value");
      values.push_back(v);
      ++n;
      if (next == stop) break;
      if (*next != ',') malformed("row " + std::to_string(rows + 1) + " has a bad separator");
      p = next + 1;
    }
    if (rows == 0) cols = n;
    else if (n != cols)
      malformed("ragged CSV: row " + std::to_string(rows + 1) + " has " + std::to_string(n) +
                " values, expected " + std::to_string(cols));
    ++rows;
  }
  if (rows == 0) cols = expected_cols;
  Matrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.values().begin());
  return m;
}

std::string meta_to_string(const StreamMeta& meta) {
  std::ostringstream ss;
  ss << "format: " << kStreamFormat << "\n"
     << "kind: " << stream_kind_name(meta.kind) << "\n"
     << "fps: " << meta.fps << "\n"
     << "frames: " << meta.frames << "\n"
     << "dims: " << meta.dims << "\n";
  return ss.str();
}

StreamMeta meta_from_string(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t colon = line.find(':');
    if (colon == std::string::npos) malformed("meta line without ':': " + line);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\"");
      const auto e = s.find_last_not_of(" \t\"");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, colon))] = trim(line.substr(colon + 1));
  }
  for (const char* key : {"format", "kind", "fps", "frames", "dims"})
    if (!kv.count(key)) malformed(std::string("meta lacks '") + key + "'");
  if (kv["format"] != kStreamFormat) malformed("meta format is not " + std::string(kStreamFormat));
  StreamMeta meta;
  if (kv["kind"] == "audio") meta.kind = StreamKind::Audio;
  else if (kv["kind"] == "motion") meta.kind = StreamKind::Motion;
  else malformed("meta kind must be audio or motion");
  auto number = [&](const char* key) {
    const std::string& s = kv[key];
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) malformed(std::string("meta ") + key + " is not a count");
    return v;
  };
  meta.fps = number("fps");
  meta.frames = number("frames");
  meta.dims = number("dims");
  return meta;
}

void save_stream(const std::filesystem::path& path, const Matrix& m, const StreamMeta& meta) {
  if (meta.dims != stream_dims(meta.kind) || m.cols() != meta.dims || m.rows() != meta.frames)
    throw Error(Errc::MetaMismatch, "matrix " + std::to_string(m.rows()) + "x" +
                                        std::to_string(m.cols()) + " does not fit its " +
                                        stream_kind_name(meta.kind) + " meta");
  write_file_atomic(path, stream_to_csv(m));
  write_file_atomic(meta_path(path), meta_to_string(meta));
}

Stream load_stream(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) malformed("missing stream file " + path.string());
  if (!std::filesystem::exists(meta_path(path))) malformed("missing sidecar " + meta_path(path).string());
  Stream s;
  s.meta = meta_from_string(read_file(meta_path(path)));
  s.data = stream_from_csv(read_file(path), s.meta.dims);
  if (s.meta.dims != stream_dims(s.meta.kind))
    throw Error(Errc::MetaMismatch, std::string(stream_kind_name(s.meta.kind)) + " streams have " +
                                        std::to_string(stream_dims(s.meta.kind)) + " dims, meta says " +
                                        std::to_string(s.meta.dims));
  if (s.data.cols() != s.meta.dims)
    throw Error(Errc::MetaMismatch, path.string() + " has " + std::to_string(s.data.cols()) +
                                        " columns, meta says " + std::to_string(s.meta.dims));
  if (s.data.rows() != s.meta.frames)
    throw Error(Errc::MetaMismatch, path.string() + " has " + std::to_string(s.data.rows()) +
                                        " rows, meta says " + std::to_string(s.meta.frames));
  return s;
}

}  // namespace qean
