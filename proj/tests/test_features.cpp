#include "doctest.h"

#include <array>
#include <cmath>
#include <filesystem>
#include <random>

#include "qean/features.hpp"
#include "qean/io.hpp"
#include "qean/metrics.hpp"

using namespace qean;

namespace {

Quaternion random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Quaternion q{n(rng), n(rng), n(rng), n(rng)};
  return q_scale(1.0 / q_norm(q), q);
}

double orthonormality_error(const RotationMatrix& r) {
  double e = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += r[k * 3 + i] * r[k * 3 + j];
      e = std::max(e, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  return e;
}

std::filesystem::path temp_dir(const char* name) {
  const auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("encode examples") {
    std::vector<Quaternion> rest(kJoints, kUnitOne);
    const auto f = encode_motion_frame(rest, {0, 0, 0});
    REQUIRE(f.size() == 219);
    for (std::size_t j = 0; j < kJoints; ++j)
      for (std::size_t i = 0; i < 9; ++i) CHECK(f[9 * j + i] == (i % 4 == 0 ? 1.0 : 0.0));
    for (std::size_t i = 216; i < 219; ++i) CHECK(f[i] == 0.0);

    const double s = std::sqrt(0.5);
    rest[0] = {s, s, 0, 0};
    const auto g = encode_motion_frame(rest, {0, 0, 0});
    const double want[] = {1, 0, 0, 0, 0, -1, 0, 1, 0};
    for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(g[i] - want[i]) < 1e-15);

    rest[1] = {1, 1, 0, 0};
    CHECK_THROWS_AS(encode_motion_frame(rest, {0, 0, 0}), Error);
  }

  TEST_CASE("decode round trip and projection") {
    std::mt19937_64 rng(1);
    std::vector<Quaternion> qs(kJoints);
    for (auto& q : qs) q = random_unit(rng);
    const std::array<double, 3> tr{0.3, -1.0, 2.5};
    const DecodedFrame d = decode_motion_frame(encode_motion_frame(qs, tr));
    for (std::size_t j = 0; j < kJoints; ++j) {
      const Quaternion a = d.rotations[j], b = qs[j];
      const double same = std::max({std::abs(a.e - b.e), std::abs(a.f - b.f), std::abs(a.g - b.g), std::abs(a.h - b.h)});
      const double flip = std::max({std::abs(a.e + b.e), std::abs(a.f + b.f), std::abs(a.g + b.g), std::abs(a.h + b.h)});
      CHECK(std::min(same, flip) < 1e-9);
    }
    CHECK(d.translation == tr);

    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 200; ++t) {
      RotationMatrix r = quat_to_rotmat(random_unit(rng));
      std::array<double, 9> eps;
      double n = 0.0;
      for (double& e : eps) {
        e = u(rng);
        n += e * e;
      }
      const double scale = 1e-2 * u(rng) / std::sqrt(n);
      for (std::size_t i = 0; i < 9; ++i) r[i] += scale * eps[i];
      CHECK(orthonormality_error(nearest_rotation(r)) < 1e-9);
    }
    CHECK_THROWS_AS(decode_motion_frame(std::vector<double>(218)), Error);
  }

  TEST_CASE("synthetic pairs") {
    const SynthPair s = synth_pair(3, 2.0, 60, 30);
    CHECK(s.audio.rows() == 120);
    CHECK(s.audio.cols() == 35);
    CHECK(s.motion.rows() == 120);
    CHECK(s.motion.cols() == 219);
    for (std::size_t t = 0; t < 120; ++t) CHECK(s.audio(t, kBeatChannel) == (t % 30 == 0 ? 1.0 : 0.0));
    CHECK(music_beats(s.audio).frames == std::vector<std::int64_t>{0, 30, 60, 90});
    const SynthPair again = synth_pair(3, 2.0, 60, 30);
    CHECK(again.audio == s.audio);
    CHECK(again.motion == s.motion);
    for (std::size_t period : {2u, 3u, 7u, 16u, 17u, 30u}) {
      const SynthPair p = synth_pair(period, 3.0, 60, period);
      CHECK(std::abs(beat_align(motion_beats(p.motion), music_beats(p.audio)) - 1.0) < 1e-9);
    }
    CHECK_THROWS_AS(synth_pair(1, 0.0, 60, 30), Error);
  }

  TEST_CASE("stream files") {
    const auto dir = temp_dir("qean_features_test");
    const SynthPair s = synth_pair(4, 0.5, 60, 12);
    save_stream(dir / "m.csv", s.motion, make_meta(StreamKind::Motion, s.motion.rows()));
    const Stream back = load_stream(dir / "m.csv");
    CHECK(back.data == s.motion);
    CHECK(back.meta.kind == StreamKind::Motion);
    CHECK(std::filesystem::exists(meta_path(dir / "m.csv")));

    CHECK_THROWS_AS(save_stream(dir / "a.csv", s.motion, make_meta(StreamKind::Audio, s.motion.rows())), Error);
    write_file_atomic(dir / "x.csv", stream_to_csv(s.motion));
    write_file_atomic(meta_path(dir / "x.csv"), meta_to_string(make_meta(StreamKind::Audio, s.motion.rows())));
    try {
      load_stream(dir / "x.csv");
      FAIL("expected MetaMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::MetaMismatch);
    }
    try {
      stream_from_csv("1,2,3\n4,5\n", 3);
      FAIL("expected MalformedFile");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::MalformedFile);
    }
    std::filesystem::remove_all(dir);
  }
}
