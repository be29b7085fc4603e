#include "oracles.hpp"
#include "smsat/validation.hpp"

#include <doctest.h>

using namespace smsat;

namespace {

std::vector<io::AudioClip> corpus(double noise_sigma, int n = 2) {
  io::SynthConfig sc;
  sc.n_per_class = n;
  sc.duration_s = 2.0;
  sc.noise_sigma = noise_sigma;
  std::vector<io::AudioClip> clips;
  for (auto& s : io::synth_clips(sc, 11)) clips.push_back(std::move(s.clip));
  return clips;
}

}  // namespace

TEST_CASE("rmse by hand and shape errors") {
  Vector a(4), b(4);
  a << 1, 2, 3, 4;
  b << 1, 2, 3, 6;
  CHECK(validation::rmse(a, b) == doctest::Approx(1.0));
  CHECK_THROWS_AS(validation::rmse(a, Vector(Vector::Zero(3))), ShapeError);
}

TEST_CASE("reconstruction uses the clip envelope and the model tone") {
  io::AudioClip c;
  c.rate = 1000;
  c.samples.resize(2000);
  for (int i = 0; i < 2000; ++i) c.samples(i) = 0.5 * std::cos(2 * oracle::kPi * 25.0 * i / 1000.0);
  const Vector r = validation::reconstruct_theoretical(c, {25.0, 0.0});
  double worst = 0;
  for (int i = 200; i < 1800; ++i) worst = std::max(worst, std::abs(r(i) - c.samples(i)));
  CHECK(worst < 1e-3);
}

TEST_CASE("phase search recovers a shifted carrier") {
  io::AudioClip c;
  c.rate = 1000;
  c.samples.resize(1000);
  const double phi = 2 * oracle::kPi * 5.0 / 32.0;
  for (int i = 0; i < 1000; ++i) c.samples(i) = std::cos(2 * oracle::kPi * 20.0 * i / 1000.0 + phi);
  CHECK(validation::search_phase(c, 20.0) == doctest::Approx(phi).epsilon(1e-9));
}

TEST_CASE("class-matched models give small RMSE on a clean corpus") {
  const auto report = validation::validate_clips(corpus(0.0), {});
  for (auto l : kAllLabels) {
    REQUIRE(report.per_class[label_index(l)].has_value());
    CHECK(report.per_class[label_index(l)]->rmse_mean < 0.02);
    CHECK(report.per_class[label_index(l)]->n == 2);
  }
  CHECK(report.per_clip.size() == 6);
}

TEST_CASE("RMSE grows with injected noise") {
  double prev = -1.0;
  for (double sigma : {0.0, 0.05, 0.1}) {
    const auto r = validation::validate_clips(corpus(sigma), {});
    const double sm = r.per_class[label_index(ClassLabel::SpiritualMeditation)]->rmse_mean;
    CHECK(sm > prev);
    prev = sm;
  }
}

TEST_CASE("envelope statistics of a constant-amplitude tone") {
  io::AudioClip c;
  c.rate = 1000;
  c.samples.resize(1000);
  for (int i = 0; i < 1000; ++i) c.samples(i) = 0.25 * std::sin(2 * oracle::kPi * 50.0 * i / 1000.0);
  const auto s = validation::envelope_stats(c);
  CHECK(s.env_mean == doctest::Approx(0.25).epsilon(1e-3));
  CHECK(s.env_std < 1e-3);
  CHECK(s.energy == doctest::Approx(c.samples.squaredNorm()));
}

TEST_CASE("report serialization names per-class RMSE") {
  const auto r = validation::validate_clips(corpus(0.0, 1), {});
  const auto j = validation::report_to_json(r);
  CHECK(j.at("per_class").contains("SpiritualMeditation"));
  CHECK(j.at("per_class").at("Music").contains("rmse_mean"));
  const std::string csv = validation::report_to_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  const std::string svg = validation::overlay_svg(corpus(0.0, 1)[0], {25.0, 0.0});
  CHECK(svg.rfind("<svg", 0) == 0);
}
