#include "doctest.h"

#include <random>

#include "oracles.hpp"
#include "qean/model.hpp"

using namespace qean;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d_model = 16;
  c.heads = 2;
  c.encoder_layers = 1;
  c.d_ff = 24;
  c.seed_motion_frames = 6;
  c.audio_frames = 9;
  c.future_frames = 2;
  return c;
}

struct Inputs {
  Matrix seed, audio;
};

Inputs inputs(const ModelConfig& c, std::uint64_t seed, std::size_t audio_rows = 0) {
  std::mt19937_64 rng(seed);
  return {random_normal(c.seed_motion_frames, kMotionChannels, 0.5, rng),
          random_normal(audio_rows ? audio_rows : c.audio_frames, kAudioChannels, 0.5, rng)};
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("embedding shapes and linearity") {
    const ModelConfig desk = ModelConfig::desk();
    const ModelWeights w = init_weights(desk, 1);
    CHECK(embed_stream(Matrix(30, 219), StreamKind::Motion, w, desk).cols() == 64);
    const ModelConfig paper = ModelConfig::paper();
    ModelWeights pw;
    pw.audio_embed = {Matrix(35, 800), Matrix(1, 800)};
    pw.audio_pos = Matrix(240, 800);
    CHECK(embed_stream(Matrix(3, 35, 1.0), StreamKind::Audio, pw, paper) == Matrix(3, 800));
    CHECK_THROWS_AS(embed_stream(Matrix(3, 34), StreamKind::Audio, w, desk), Error);
  }

  TEST_CASE("encoder shapes") {
    const ModelConfig desk = ModelConfig::desk();
    const ModelWeights w = init_weights(desk, 2);
    std::mt19937_64 rng(3);
    const Matrix h = random_normal(30, 64, 1.0, rng);
    CHECK(encode(h, {}, desk) == h);
    const Matrix e = encode(h, w.motion_encoder, desk);
    CHECK(e.rows() == 30);
    CHECK(e.cols() == 64);
  }

  TEST_CASE("canonical ablation matches the reference transformer") {
    ModelConfig c = small_config();
    c.use_spe = false;
    c.use_qra = false;
    ModelWeights w = init_weights(c, 4);
    std::mt19937_64 rng(5);
    for (Matrix* pos : {&w.motion_pos, &w.audio_pos}) *pos = random_normal(pos->rows(), pos->cols(), 0.3, rng);
    const Inputs in = inputs(c, 6);
    CHECK(max_abs_diff(predict(in.seed, in.audio, w, c), oracle::canonical_predict(in.seed, in.audio, w, c)) < 1e-10);

    c.readout_residual = false;
    c.use_learned_abs_pos = false;
    CHECK(max_abs_diff(predict(in.seed, in.audio, w, c), oracle::canonical_predict(in.seed, in.audio, w, c)) < 1e-10);
  }

  TEST_CASE("toggles change the output") {
    ModelConfig c = small_config();
    const ModelWeights w = init_weights(c, 7);
    const Inputs in = inputs(c, 8);
    const Matrix full = predict(in.seed, in.audio, w, c);
    ModelConfig no_spe = c;
    no_spe.use_spe = false;
    ModelConfig no_qra = c;
    no_qra.use_qra = false;
    CHECK(max_abs_diff(full, predict(in.seed, in.audio, w, no_spe)) > 1e-8);
    CHECK(max_abs_diff(full, predict(in.seed, in.audio, w, no_qra)) > 1e-8);
  }

  TEST_CASE("determinism") {
    const ModelConfig c = ModelConfig::desk();
    const ModelWeights a = init_weights(c, 9), b = init_weights(c, 9);
    const Inputs in = inputs(c, 10);
    CHECK(predict(in.seed, in.audio, a, c) == predict(in.seed, in.audio, b, c));
  }

  TEST_CASE("autoregressive generation") {
    const ModelConfig c = small_config();
    const ModelWeights w = init_weights(c, 11);
    const Inputs in = inputs(c, 12, required_audio_frames(c, 7));
    CHECK(autoregressive_generate(in.seed, in.audio, 0, w, c).rows() == 0);
    const Matrix one = autoregressive_generate(in.seed, in.audio, 1, w, c);
    const Matrix first = predict(in.seed, in.audio.row_block(0, c.audio_frames), w, c);
    CHECK(one == first.row_block(0, 1));
    const Matrix seven = autoregressive_generate(in.seed, in.audio, 7, w, c);
    CHECK(seven.rows() == 7);
    CHECK(seven.all_finite());
    CHECK(seven.row_block(0, 1) == one);
    try {
      autoregressive_generate(in.seed, in.audio, 8, w, c);
      FAIL("expected AudioTooShort");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::AudioTooShort);
    }
  }

  TEST_CASE("desk generation of 40 frames") {
    const ModelConfig c = ModelConfig::desk();
    const ModelWeights w = init_weights(c, 13);
    const Inputs in = inputs(c, 14, required_audio_frames(c, 40));
    const Matrix g = autoregressive_generate(in.seed, in.audio, 40, w, c);
    CHECK(g.rows() == 40);
    CHECK(g.cols() == 219);
    CHECK(g.all_finite());
  }

  TEST_CASE("end-to-end gradient on a small model") {
    ModelConfig c = small_config();
    c.periods = 1;
    ModelWeights w = init_weights(c, 15);
    const Inputs in = inputs(c, 16);
    ModelCachePtr cache;
    const Matrix pred = forward(in.seed, in.audio, w, c, {}, cache);
    std::mt19937_64 rng(17);
    const Matrix target = pred + 0.01 * random_normal(pred.rows(), pred.cols(), 1.0, rng);
    const Matrix dpred = (2.0 / static_cast<double>(pred.size())) * (pred - target);
    ModelWeights g = zeros_like(w);
    backward(*cache, dpred, w, c, g);
    auto loss = [&] {
      const Matrix p = predict(in.seed, in.audio, w, c);
      const Matrix d = p - target;
      double s = 0.0;
      for (double v : d.values()) s += v * v;
      return s / static_cast<double>(d.size());
    };
    std::vector<GradTarget> targets;
    auto wt = named_tensors(w);
    const auto gt = named_tensors(static_cast<const ModelWeights&>(g));
    for (std::size_t i = 0; i < wt.size(); ++i) targets.push_back({wt[i].name, wt[i].tensor, gt[i].tensor});
    const GradReport r = grad_check(loss, targets, 1e-5, 1e-4, 6, 3);
    CHECK(r.max_rel_error < 1e-4);
  }

  TEST_CASE("checkpoint round trip") {
    const ModelConfig c = small_config();
    const ModelWeights w = init_weights(c, 18);
    const std::string text = checkpoint_to_string(c, w);
    const Checkpoint back = checkpoint_from_string(text);
    CHECK(checkpoint_to_string(back.config, back.weights) == text);
    const auto a = named_tensors(w);
    const auto b = named_tensors(back.weights);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].tensor == *b[i].tensor);
    CHECK_THROWS_AS(checkpoint_from_string("{\"format\": \"other\"}"), Error);
  }

  TEST_CASE("configuration guards") {
    ModelConfig c = ModelConfig::desk();
    c.heads = 5;
    CHECK_THROWS_AS(c.validate(), Error);
    ModelConfig p = ModelConfig::paper();
    CHECK_NOTHROW(p.validate());
    p.decoder_heads = 0;
    CHECK_THROWS_AS(p.validate(), Error);
  }
}
