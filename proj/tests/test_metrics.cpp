#include "doctest.h"

#include <cmath>
#include <random>

#include "qean/features.hpp"
#include "qean/metrics.hpp"

using namespace qean;

namespace {

template <class F>
void require_errc(Errc want, F&& fn) {
  try {
    fn();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == want);
  }
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("dynamic features") {
    const Matrix still(10, 219, 0.7);
    for (double v : dynamic_features(still)) CHECK(v == 0.0);
    Matrix ramp(10, 219);
    for (std::size_t t = 0; t < 10; ++t)
      for (std::size_t c = 0; c < 219; ++c) ramp(t, c) = 0.5 * static_cast<double>(c) * static_cast<double>(t);
    const auto f = dynamic_features(ramp);
    REQUIRE(f.size() == 64);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(std::abs(f[i] - 0.5 * static_cast<double>(14 * i)) < 1e-12);
      CHECK(std::abs(f[16 + i]) < 1e-12);
      CHECK(std::abs(f[32 + i]) < 1e-12);
      CHECK(std::abs(f[48 + i]) < 1e-12);
    }
    require_errc(Errc::TooFewFrames, [] { dynamic_features(Matrix(2, 219)); });
  }

  TEST_CASE("geometric features") {
    const auto z = geometric_features(Matrix(5, 219));
    REQUIRE(z.size() == 32);
    for (std::size_t i = 24; i < 27; ++i) CHECK(z[i] == 0.0);
    for (double v : z) CHECK((v == 0.0 || v == 1.0));
    const SynthPair s = synth_pair(5, 1.0, 60, 20);
    CHECK(geometric_features(s.motion) == geometric_features(s.motion));
  }

  TEST_CASE("fid") {
    std::mt19937_64 rng(1);
    const Matrix a = random_normal(30, 5, 1.0, rng);
    CHECK(fid(a, a) < 1e-8);
    const double m = 2.75;
    Matrix x(6, 1), y(6, 1);
    const double base[] = {-1.0, 0.5, 2.0, -0.3, 0.1, 1.7};
    for (std::size_t i = 0; i < 6; ++i) {
      x(i, 0) = base[i];
      y(i, 0) = base[i] + m;
    }
    CHECK(std::abs(fid(x, y, 0.0) - m * m) < 1e-8);
    CHECK(std::abs(fid(a, random_normal(30, 5, 1.0, rng)) - fid(a, a)) > 0.0);
    require_errc(Errc::DimensionMismatch, [&] { fid(Matrix(4, 64), Matrix(4, 32)); });
    require_errc(Errc::TooFewItems, [&] { fid(Matrix(1, 3), Matrix(4, 3)); });
  }

  TEST_CASE("diversity") {
    CHECK(diversity(Matrix(5, 3, 1.25)) == 0.0);
    CHECK(diversity(Matrix::from_rows({{0, 0}, {0, 2}})) == 2.0);
    std::mt19937_64 rng(2);
    const Matrix s = random_normal(40, 3, 1.0, rng);
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < 40; ++i)
      for (std::size_t j = i + 1; j < 40; ++j, ++pairs) {
        double d = 0.0;
        for (std::size_t c = 0; c < 3; ++c) d += (s(i, c) - s(j, c)) * (s(i, c) - s(j, c));
        sum += std::sqrt(d);
      }
    CHECK(pairs == 780);
    CHECK(std::abs(diversity(s) - sum / 780.0) < 1e-12);
  }

  TEST_CASE("beats") {
    CHECK(strict_local_minima(std::vector<double>{3, 1, 2}) == std::vector<std::int64_t>{1});
    CHECK(strict_local_minima(std::vector<double>{3, 1, 1, 2}).empty());
    Matrix line(8, 219);
    for (std::size_t t = 0; t < 8; ++t) line(t, 0) = static_cast<double>(t);
    CHECK(motion_beats(line).frames.empty());
    const auto v = motion_velocity(line);
    CHECK(v[0] == v[1]);

    Matrix audio(10, 35);
    CHECK(music_beats(audio).frames.empty());
    audio(2, kBeatChannel) = 0.5;
    audio(5, kBeatChannel) = 0.51;
    CHECK(music_beats(audio).frames == std::vector<std::int64_t>{5});
    CHECK(music_beats(synth_pair(1, 2.0, 60, 30).audio).frames == std::vector<std::int64_t>{0, 30, 60, 90});
  }

  TEST_CASE("beat_align") {
    const double oracle = (std::exp(-4.0 / 18.0) + std::exp(-9.0 / 18.0)) / 2.0;
    CHECK(std::abs(beat_align({{10, 50}}, {{12, 47}}, 3.0) - oracle) < 1e-12);
    CHECK(beat_align({{4, 9}}, {{1, 4, 9, 20}}) == 1.0);
    require_errc(Errc::EmptyMotionBeats, [] { beat_align({}, {{1}}); });
    require_errc(Errc::EmptyMusicBeats, [] { beat_align({{1}}, {}); });

    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::int64_t> f(0, 200);
    for (int t = 0; t < 200; ++t) {
      BeatTimeline music;
      for (std::int64_t b = f(rng) % 20; b < 220; b += 5 + f(rng) % 40) music.frames.push_back(b);
      BeatTimeline motion{{f(rng), 210 + f(rng)}};
      const double before = beat_align(motion, music);
      std::int64_t& m = motion.frames[t % 2];
      std::int64_t nearest = music.frames[0];
      for (std::int64_t b : music.frames)
        if (std::abs(b - m) < std::abs(nearest - m)) nearest = b;
      if (m == nearest) continue;
      m += m < nearest ? 1 : -1;
      CHECK(beat_align(motion, music) >= before);
    }
  }

  TEST_CASE("evaluate") {
    std::vector<Matrix> ref, audio;
    for (std::size_t i = 0; i < 4; ++i) {
      SynthPair s = synth_pair(i, 1.0, 60, 12 + 2 * i);
      ref.push_back(std::move(s.motion));
      audio.push_back(std::move(s.audio));
    }
    const std::vector<std::string> all{"fid", "dist", "beat_align"};
    const auto r = evaluate({ref, ref, audio}, all);
    CHECK(r.at("fid_k") < 1e-8);
    CHECK(r.at("fid_g") < 1e-8);
    CHECK(std::abs(r.at("beat_align") - 1.0) < 1e-9);
    CHECK(r.at("items_gen") == 4.0);
    require_errc(Errc::TooFewItems, [&] {
      const std::vector<std::string> f{"fid"};
      evaluate({{ref[0]}, {ref[0]}, {}}, f);
    });
  }
}
