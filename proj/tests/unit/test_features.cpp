#include "oracles.hpp"
#include "smsat/features.hpp"
#include "smsat/rng.hpp"
#include "smsat/text.hpp"

#include <doctest.h>

#include <filesystem>

using namespace smsat;

namespace {

io::AudioClip noise_clip(Eigen::Index n, std::uint64_t seed, double amp = 0.3) {
  CounterRng rng(seed);
  io::AudioClip c;
  c.samples.resize(n);
  for (auto& x : c.samples) x = amp * rng.normal();
  c.id = "noise" + std::to_string(seed);
  return c;
}

}  // namespace

TEST_CASE("mfcc13 matches a two-loop reference") {
  const auto clip = noise_clip(2000, 1);
  features::MelParams p;
  const auto got = features::mfcc13(clip, p);
  std::vector<double> x(clip.samples.data(), clip.samples.data() + clip.samples.size());
  const auto ref = oracle::mfcc_two_loop(x, 16000, 512, 400, 160, 64, 0, 8000);
  for (int i = 0; i < 13; ++i) CHECK(got(i) == doctest::Approx(ref[i]).epsilon(1e-9));
}

TEST_CASE("log-mel grid shape and axis") {
  const auto clip = noise_clip(16000, 2);
  const auto g = features::mel_spectrogram(clip);
  CHECK(g.bins() == 64);
  CHECK(g.frames() == 98);
  CHECK(g.frame_hop_s == doctest::Approx(0.01));
  CHECK(g.row_axis(0) > 0.0);
  CHECK(g.row_axis(63) < 8000.0);
  CHECK_THROWS_AS(features::mel_spectrogram(noise_clip(100, 3)), Error);
}

TEST_CASE("zcr and rms by hand") {
  Vector x(6);
  x << 1, -1, 2, 0, -3, 4;
  // Products: -1, -2, 0, 0, -12 -> three strictly negative of five.
  CHECK(features::zcr(x) == doctest::Approx(3.0 / 5.0));
  CHECK(features::rms(x) == doctest::Approx(std::sqrt(31.0 / 6.0)));
}

TEST_CASE("haar levels match the closed-form block sums") {
  const auto clip = noise_clip(256, 4);
  std::vector<double> x(clip.samples.data(), clip.samples.data() + 256);
  const auto stats = features::wavelet_stats(clip.samples);
  for (int j = 1; j <= 5; ++j) {
    const auto d = oracle::haar_detail_closed_form(x, j);
    double mu = 0;
    for (double v : d) mu += v / static_cast<double>(d.size());
    double var = 0;
    for (double v : d) var += (v - mu) * (v - mu) / static_cast<double>(d.size());
    CHECK(stats(2 * (j - 1)) == doctest::Approx(mu).epsilon(1e-10));
    CHECK(stats(2 * (j - 1) + 1) == doctest::Approx(std::sqrt(var)).epsilon(1e-10));
  }
}

TEST_CASE("dwt steps preserve energy on even lengths") {
  const auto clip = noise_clip(64, 5);
  for (auto w : {features::Wavelet::Haar, features::Wavelet::Daubechies4}) {
    const auto lv = features::dwt_step(clip.samples, w);
    CHECK(lv.approx.squaredNorm() + lv.detail.squaredNorm() == doctest::Approx(clip.samples.squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("odd lengths are padded by repeating the last sample") {
  Vector x(3);
  x << 1, 2, 5;
  const auto lv = features::dwt_step(x);
  REQUIRE(lv.detail.size() == 2);
  CHECK(lv.detail(1) == doctest::Approx(0.0));
  CHECK(lv.approx(1) == doctest::Approx(10.0 / std::sqrt(2.0)));
}

TEST_CASE("wavelet stats need 32 samples") {
  CHECK_THROWS_AS(features::wavelet_stats(Vector::Ones(31)), Error);
  CHECK(features::parse_wavelet("db4") == features::Wavelet::Daubechies4);
  CHECK_THROWS_AS(features::parse_wavelet("sym5"), Error);
}

TEST_CASE("feature vector layout") {
  const auto clip = noise_clip(8000, 6);
  const auto f = features::extract_features(clip);
  CHECK(f.head<13>().isApprox(features::mfcc13(clip)));
  CHECK(f(13) == doctest::Approx(features::zcr(clip.samples)));
  CHECK(f(14) == doctest::Approx(features::rms(clip.samples)));
  CHECK(features::feature_names()[0] == "mfcc_0");
  CHECK(features::feature_names()[13] == "zcr");
  CHECK(features::feature_names()[14] == "rms");
}

TEST_CASE("feature CSV has id, label and 25 columns and round trips") {
  std::vector<features::FeatureRow> rows;
  for (int i = 0; i < 3; ++i) {
    auto c = noise_clip(4000, 10 + static_cast<std::uint64_t>(i));
    rows.push_back({c.id, label_from_index(i), features::extract_features(c)});
  }
  const std::string csv = features::features_to_csv(rows);
  const auto tmp = std::filesystem::temp_directory_path() / "smsat_features_test.csv";
  text::write_text(tmp, csv);
  const auto t = text::read_csv(tmp);
  CHECK(t.header.size() == 27);
  CHECK(t.rows.size() == 3);
  const auto back = features::read_features_csv(tmp);
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[i].id == rows[i].id);
    CHECK(back[i].label == rows[i].label);
    CHECK(back[i].x == rows[i].x);
  }
  std::filesystem::remove(tmp);
}
