#include "smsat/encoder.hpp"

#include <doctest.h>

#include <filesystem>

using namespace smsat;
using namespace smsat::nn;

namespace {

// Conv layers as (in, out, kernel); each is followed by a batchnorm with two
// parameters per channel. Listed layer by layer for the full-size network.
std::int64_t full_size_parameter_oracle() {
  struct L {
    std::int64_t in, out, k;
  };
  std::vector<L> layers = {{1, 64, 7}};
  const std::int64_t w[] = {64, 128, 256, 512};
  std::int64_t in = 64;
  for (int s = 0; s < 4; ++s)
    for (int b = 0; b < 2; ++b) {
      layers.push_back({in, w[s], 3});
      layers.push_back({w[s], w[s], 3});
      if (in != w[s]) layers.push_back({in, w[s], 1});
      in = w[s];
    }
  std::int64_t total = 0;
  for (const auto& l : layers) total += l.in * l.out * l.k * l.k + 2 * l.out;
  return total + 512 * 128 + 128;
}

}  // namespace

TEST_CASE("full-size encoder parameter count") {
  const auto m = encoder::build_encoder({}, 1);
  CHECK(full_size_parameter_oracle() == 11235904);
  CHECK(encoder::count_parameters(m) == full_size_parameter_oracle());
}

TEST_CASE("encoder FLOPs for one 64x256 input") {
  // stem 32x128, pool 16x64, stages at 16x64, 8x32, 4x16, 2x8.
  std::int64_t macs = 1 * 49 * 64 * 32 * 128;
  const std::int64_t w[] = {64, 128, 256, 512};
  std::int64_t hw[] = {16 * 64, 8 * 32, 4 * 16, 2 * 8};
  std::int64_t in = 64;
  for (int s = 0; s < 4; ++s)
    for (int b = 0; b < 2; ++b) {
      macs += (in * 9 * w[s] + w[s] * 9 * w[s]) * hw[s];
      if (in != w[s]) macs += in * w[s] * hw[s];
      in = w[s];
    }
  macs += 512 * 128;
  CHECK(encoder::count_flops({}) == 2 * macs);
}

TEST_CASE("width scaling and validation") {
  encoder::EncoderConfig c;
  c.width_scale = 0.125;
  CHECK(c.scaled_widths() == std::vector<Index>{8, 16, 32, 64});
  c.blocks = {2, 2};
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("forward shape and eval determinism") {
  encoder::EncoderConfig c;
  c.width_scale = 0.125;
  c.n_mels = 16;
  c.frames = 32;
  auto m = encoder::build_encoder(c, 3);
  CounterRng r(1);
  auto x = uniform_init({3, 1, 16, 32}, 1.0, r);
  const auto y1 = m.forward(x, false), y2 = m.forward(x, false);
  CHECK(y1.shape() == Shape{3, 128});
  CHECK(y1.value().isApprox(y2.value()));
}

TEST_CASE("width-1/8 encoder passes a gradient check") {
  encoder::EncoderConfig c;
  c.width_scale = 0.125;
  c.n_mels = 16;
  c.frames = 16;
  auto m = encoder::build_encoder(c, 2);
  CounterRng r(9);
  auto a = uniform_init({8, 1, 16, 16}, 1.0, r), b = uniform_init({8, 1, 16, 16}, 1.0, r);
  auto inputs = m.parameters();
  inputs.push_back({"x", a});
  const auto res = grad_check([&] { return encoder::contrastive_loss(m.forward(a, true), m.forward(b, true)); }, inputs,
                              1e-6, 6);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("contrastive loss and cosine by hand") {
  auto p1 = Tensor::from({2, 2}, (Array(4) << 1, 0, 0, 1).finished());
  auto p2 = Tensor::from({2, 2}, (Array(4) << 0, 1, 0, 2).finished());
  // Row distances squared: 2 and 1, mean 1.5.
  CHECK(encoder::contrastive_loss(p1, p2).item() == doctest::Approx(1.5));
  CHECK(encoder::mean_cosine(p1, p2) == doctest::Approx(0.5));
  CounterRng r(4);
  auto q = uniform_init({4, 3}, 1.0, r);
  CHECK(grad_check([&] { return encoder::uniformity_loss(q); }, {{"q", q}}).max_rel_error < 1e-6);
}

TEST_CASE("fit_frames crops the centre and pads with the minimum") {
  Matrix g(2, 6);
  g << 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, -1;
  const Matrix crop = encoder::fit_frames(g, 2);
  CHECK(crop(0, 0) == 2);
  CHECK(crop(0, 1) == 3);
  const Matrix pad = encoder::fit_frames(g, 8);
  CHECK(pad.cols() == 8);
  CHECK(pad.col(7).isConstant(-1.0));
}

TEST_CASE("short training run, checkpoint and embeddings") {
  io::SynthConfig sc;
  sc.n_per_class = 2;
  sc.duration_s = 0.7;
  std::vector<io::AudioClip> clips;
  for (auto& s : io::synth_clips(sc, 1)) clips.push_back(std::move(s.clip));
  encoder::EncoderTrainConfig tc;
  tc.model.width_scale = 0.125;
  tc.model.frames = 64;
  tc.epochs = 2;
  tc.batch = 2;
  tc.held_out = 0.34;
  tc.aug.variants_per_clip = 1;
  auto run = encoder::train_encoder(clips, tc);
  REQUIRE(run.history.size() == 2);
  CHECK(run.held_out_ids.size() == 3);
  CHECK(std::isfinite(run.history.back().val_loss));
  CHECK(encoder::history_to_csv(run.history).rfind("epoch,train_loss,val_loss,train_cossim,val_cossim,embed_var\n", 0) == 0);

  const auto file = std::filesystem::temp_directory_path() / "smsat_enc.ckpt";
  encoder::save_encoder(file, run.model, tc.mel, 1);
  auto loaded = encoder::load_encoder(file);
  const auto e1 = encoder::embed_corpus(run.model, tc.mel, clips);
  const auto e2 = encoder::embed_corpus(loaded.model, loaded.mel, clips, 2);
  REQUIRE(e1.size() == 6);
  for (std::size_t i = 0; i < e1.size(); ++i) CHECK(e1[i].v == e2[i].v);
  std::filesystem::remove(file);
}
