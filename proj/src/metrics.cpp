#include "qean/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qean/features.hpp"
#include "qean/io.hpp"

namespace qean {

namespace {

struct Moments {
  double mean = 0.0, sd = 0.0;
};

Moments moments(std::span<const double> x) {
  Moments m;
  if (x.empty()) return m;
  for (double v : x) m.mean += v;
  m.mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - m.mean) * (v - m.mean);
  m.sd = std::sqrt(var / static_cast<double>(x.size()));
  return m;
}

void need_items(const FeatureSet& s, const char* which) {
  if (s.rows() < 2)
    throw Error(Errc::TooFewItems, std::string(which) + " needs at least 2 items, got " +
                                       std::to_string(s.rows()));
}

Matrix covariance(const FeatureSet& s, const Matrix& mean) {
  const std::size_t n = s.rows(), d = s.cols();
  Matrix centered(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) centered(r, c) = s(r, c) - mean(0, c);
  Matrix cov = matmul_tn(centered, centered);
  cov *= 1.0 / static_cast<double>(n - 1);
  return cov;
}

double trace(const Matrix& m) {
  double t = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) t += m(i, i);
  return t;
}

void symmetrize(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double v = 0.5 * (m(i, j) + m(j, i));
      m(i, j) = v;
      m(j, i) = v;
    }
}

}  // namespace

std::vector<double> dynamic_features(const Matrix& motion) {
  if (motion.rows() < 3)
    throw Error(Errc::TooFewFrames, "dynamic features need at least 3 frames");
  if (motion.cols() != kMotionChannels)
    throw Error(Errc::ChannelMismatch, "dynamic features expect 219 channels");
  const std::size_t t = motion.rows();
  std::vector<double> out(kDynamicDims);
  std::vector<double> vel(t - 1), acc(t - 2);
  for (std::size_t k = 0; k < kDynamicChannels; ++k) {
    const std::size_t c = k * kDynamicStride;
    for (std::size_t i = 0; i + 1 < t; ++i) vel[i] = motion(i + 1, c) - motion(i, c);
    for (std::size_t i = 0; i + 1 < vel.size(); ++i) acc[i] = vel[i + 1] - vel[i];
    const Moments mv = moments(vel), ma = moments(acc);
    out[k] = mv.mean;
    out[kDynamicChannels + k] = mv.sd;
    out[2 * kDynamicChannels + k] = ma.mean;
    out[3 * kDynamicChannels + k] = ma.sd;
  }
  return out;
}

std::vector<double> geometric_features(const Matrix& motion) {
  if (motion.cols() != kMotionChannels)
    throw Error(Errc::ChannelMismatch, "geometric features expect 219 channels");
  if (motion.rows() == 0) throw Error(Errc::TooFewFrames, "geometric features need a frame");
  const std::size_t t = motion.rows();
  const double n = static_cast<double>(t);
  std::vector<double> out(kGeometricDims, 0.0);
  for (std::size_t j = 0; j < kJoints; ++j) {
    double tr = 0.0;
    for (std::size_t r = 0; r < t; ++r) tr += motion(r, 9 * j) + motion(r, 9 * j + 4) + motion(r, 9 * j + 8);
    out[j] = tr / n > 2.5 ? 1.0 : 0.0;
  }
  for (std::size_t a = 0; a < 3; ++a) {
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t r = 0; r < t; ++r) {
      const double v = motion(r, kTranslationBegin + a);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    out[24 + a] = sum / n > 0.0 ? 1.0 : 0.0;
    out[27 + a] = hi - lo > 0.5 ? 1.0 : 0.0;
  }
  if (t >= 2) {
    const std::vector<double> speed = motion_velocity(motion);
    const double mean = moments(speed).mean;
    std::size_t above = 0;
    for (double s : speed) above += s > mean ? 1 : 0;
    out[30] = mean > 0.05 ? 1.0 : 0.0;
    out[31] = static_cast<double>(above) > 0.5 * static_cast<double>(speed.size()) ? 1.0 : 0.0;
  }
  return out;
}

FeatureSet feature_set(std::span<const std::vector<double>> vectors) {
  if (vectors.empty()) return {};
  FeatureSet s(vectors.size(), vectors[0].size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != s.cols())
      throw Error(Errc::DimensionMismatch, "feature vectors differ in length");
    std::copy(vectors[i].begin(), vectors[i].end(), s.row(i).begin());
  }
  return s;
}

double fid(const FeatureSet& a, const FeatureSet& b, double eps) {
  if (a.cols() != b.cols())
    throw Error(Errc::DimensionMismatch, "feature dims " + std::to_string(a.cols()) + " vs " +
                                             std::to_string(b.cols()));
  need_items(a, "fid");
  need_items(b, "fid");
  const std::size_t d = a.cols();
  Matrix mu_a = column_sums(a), mu_b = column_sums(b);
  mu_a *= 1.0 / static_cast<double>(a.rows());
  mu_b *= 1.0 / static_cast<double>(b.rows());
  Matrix cov_a = covariance(a, mu_a), cov_b = covariance(b, mu_b);
  for (std::size_t i = 0; i < d; ++i) {
    cov_a(i, i) += eps;
    cov_b(i, i) += eps;
  }
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = mu_a(0, i) - mu_b(0, i);
    mean_term += diff * diff;
  }
  const Matrix root_a = sym_sqrt(cov_a);
  Matrix inner = matmul(matmul(root_a, cov_b), root_a);
  symmetrize(inner);
  const double value = mean_term + trace(cov_a) + trace(cov_b) - 2.0 * trace(sym_sqrt(inner));
  return std::max(value, 0.0);
}

double diversity(const FeatureSet& s) {
  need_items(s, "diversity");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = i + 1; j < s.rows(); ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < s.cols(); ++c) {
        const double d = s(i, c) - s(j, c);
        sq += d * d;
      }
      total += std::sqrt(sq);
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

std::vector<double> motion_velocity(const Matrix& motion) {
  if (motion.rows() < 2) throw Error(Errc::TooFewFrames, "velocity needs at least 2 frames");
  std::vector<double> v(motion.rows());
  for (std::size_t t = 1; t < motion.rows(); ++t) {
    double sq = 0.0;
    for (std::size_t c = 0; c < motion.cols(); ++c) {
      const double d = motion(t, c) - motion(t - 1, c);
      sq += d * d;
    }
    v[t] = std::sqrt(sq);
  }
  v[0] = v[1];
  return v;
}

std::vector<std::int64_t> strict_local_minima(std::span<const double> v) {
  std::vector<std::int64_t> out;
  for (std::size_t t = 1; t + 1 < v.size(); ++t)
    if (v[t] < v[t - 1] && v[t] < v[t + 1]) out.push_back(static_cast<std::int64_t>(t));
  return out;
}

BeatTimeline motion_beats(const Matrix& motion, std::size_t fps) {
  if (motion.rows() < 3) throw Error(Errc::TooFewFrames, "motion beats need at least 3 frames");
  const std::vector<double> v = motion_velocity(motion);
  return {strict_local_minima(v), fps};
}

BeatTimeline music_beats(const Matrix& audio, std::size_t fps) {
  if (audio.cols() != kAudioChannels)
    throw Error(Errc::ChannelMismatch, "music beats expect 35 audio channels, got " +
                                           std::to_string(audio.cols()));
  BeatTimeline b{{}, fps};
  for (std::size_t t = 0; t < audio.rows(); ++t)
    if (audio(t, kBeatChannel) > 0.5) b.frames.push_back(static_cast<std::int64_t>(t));
  return b;
}

double beat_align(const BeatTimeline& motion_b, const BeatTimeline& music_b, double alpha) {
  if (motion_b.frames.empty()) throw Error(Errc::EmptyMotionBeats, "no motion beats");
  if (music_b.frames.empty()) throw Error(Errc::EmptyMusicBeats, "no music beats");
  double total = 0.0;
  for (std::int64_t m : motion_b.frames) {
    auto it = std::lower_bound(music_b.frames.begin(), music_b.frames.end(), m);
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    if (it != music_b.frames.end()) best = *it - m;
    if (it != music_b.frames.begin()) best = std::min(best, m - *std::prev(it));
    const double d = static_cast<double>(best);
    total += std::exp(-d * d / (2.0 * alpha * alpha));
  }
  return total / static_cast<double>(motion_b.frames.size());
}

std::map<std::string, double> evaluate(const EvalInput& input, std::span<const std::string> metrics) {
  std::map<std::string, double> out;
  out["items_ref"] = static_cast<double>(input.reference.size());
  out["items_gen"] = static_cast<double>(input.generated.size());
  auto wants = [&](const char* m) {
    return std::find(metrics.begin(), metrics.end(), m) != metrics.end();
  };
  auto features = [](const std::vector<Matrix>& set, auto extract) {
    std::vector<std::vector<double>> v(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) v[i] = extract(set[i]);
    return feature_set(v);
  };
  const bool need_features = wants("fid") || wants("dist");
  if (need_features) {
    const FeatureSet gen_k = features(input.generated, dynamic_features);
    const FeatureSet gen_g = features(input.generated, geometric_features);
    if (wants("fid")) {
      const FeatureSet ref_k = features(input.reference, dynamic_features);
      const FeatureSet ref_g = features(input.reference, geometric_features);
      if (input.reference.size() < 2 || input.generated.size() < 2)
        throw Error(Errc::TooFewItems, "fid needs at least 2 reference and 2 generated sequences");
      out["fid_k"] = fid(ref_k, gen_k);
      out["fid_g"] = fid(ref_g, gen_g);
    }
    if (wants("dist")) {
      if (input.generated.size() < 2)
        throw Error(Errc::TooFewItems, "diversity needs at least 2 generated sequences");
      out["dist_k"] = diversity(gen_k);
      out["dist_g"] = diversity(gen_g);
    }
  }
  if (wants("beat_align")) {
    if (input.generated_audio.size() != input.generated.size())
      throw Error(Errc::TooFewItems, "beat_align needs one audio stream per generated sequence");
    if (input.generated.empty()) throw Error(Errc::TooFewItems, "beat_align needs a sequence");
    double total = 0.0;
    for (std::size_t i = 0; i < input.generated.size(); ++i)
      total += beat_align(motion_beats(input.generated[i]), music_beats(input.generated_audio[i]));
    out["beat_align"] = total / static_cast<double>(input.generated.size());
  }
  return out;
}

std::string eval_report(const std::map<std::string, double>& values) {
  std::string out =
      "# fid_k, dist_k: dynamic features (velocity and acceleration statistics)\n"
      "# fid_g, dist_g: geometric features (boolean pose predicates)\n";
  for (const auto& [key, value] : values) out += key + ": " + format_double(value) + "\n";
  return out;
}

}  // namespace qean
