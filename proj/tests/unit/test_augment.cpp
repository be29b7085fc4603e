#include "oracles.hpp"
#include "smsat/augment.hpp"
#include "smsat/dsp.hpp"

#include <doctest.h>

using namespace smsat;

namespace {

io::AudioClip tone(double hz, double seconds = 1.0, int rate = 16000) {
  io::AudioClip c;
  c.rate = rate;
  c.id = "tone";
  c.samples.resize(static_cast<Eigen::Index>(seconds * rate));
  for (Eigen::Index i = 0; i < c.samples.size(); ++i) c.samples(i) = 0.5 * std::sin(2 * oracle::kPi * hz * i / rate);
  return c;
}

}  // namespace

TEST_CASE("gaussian noise has the requested spread") {
  io::AudioClip z;
  z.samples = Vector::Zero(20000);
  const auto n = augment::add_gaussian_noise(z, 0.1, 3);
  const double sd = std::sqrt(n.samples.squaredNorm() / 20000.0);
  CHECK(sd == doctest::Approx(0.1).epsilon(0.03));
  CHECK_THROWS_AS(augment::add_gaussian_noise(z, -1.0, 3), Error);
}

TEST_CASE("time stretch length and pitch") {
  const auto c = tone(440.0);
  for (double r : {0.8, 1.25}) {
    const auto s = augment::time_stretch(c, r);
    CHECK(s.samples.size() == static_cast<Eigen::Index>(std::lround(16000 / r)));
    CHECK(std::abs(dsp::peak_frequency(s.samples, 16000) - 440.0) < 8.0);
  }
}

TEST_CASE("pitch shift keeps length and moves the peak by 2^(s/12)") {
  const auto c = tone(440.0);
  for (double s : {-2.0, 2.0}) {
    const auto p = augment::pitch_shift(c, s);
    CHECK(p.samples.size() == c.samples.size());
    CHECK(std::abs(dsp::peak_frequency(p.samples, 16000) - 440.0 * std::pow(2.0, s / 12.0)) < 8.0);
  }
}

TEST_CASE("spec mask fills one band and one span with the grid minimum") {
  features::TimeFreqGrid g;
  g.values = Matrix::Constant(10, 30, 1.0);
  g.values(0, 0) = -5.0;
  const auto m = augment::spec_mask(g, 4, 6, 9);
  int masked_rows = 0, masked_cols = 0;
  for (int r = 1; r < 10; ++r) masked_rows += (m.values.row(r).array() == -5.0).all();
  for (int c = 1; c < 30; ++c) masked_cols += (m.values.col(c).array() == -5.0).all();
  CHECK(masked_rows <= 4);
  CHECK(masked_cols <= 6);
  CHECK(((m.values.array() == 1.0) || (m.values.array() == -5.0)).all());
  CHECK(augment::spec_mask(g, 4, 6, 9).values == m.values);
  CHECK_THROWS_AS(augment::spec_mask(g, 11, 0, 1), Error);
}

TEST_CASE("pipeline is keyed by seed and clip id") {
  auto c = tone(25.0, 0.5);
  augment::AugmentConfig cfg;
  cfg.seed = 5;
  cfg.variants_per_clip = 3;
  const auto a = augment::augment_pipeline(c, cfg), b = augment::augment_pipeline(c, cfg);
  REQUIRE(a.size() == 3);
  CHECK(a[0].id == "tone.aug1");
  CHECK(a[2].id == "tone.aug3");
  for (int k = 0; k < 3; ++k) CHECK(a[k].samples == b[k].samples);
  CHECK(a[0].samples != a[1].samples);
  c.id = "other";
  CHECK(augment::augment_pipeline(c, cfg)[0].samples != a[0].samples);
}

TEST_CASE("augment config validation") {
  augment::AugmentConfig cfg;
  cfg.stretch_lo = 2.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
