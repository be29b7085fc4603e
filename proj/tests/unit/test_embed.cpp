#include "smsat/embed.hpp"

#include <doctest.h>

using namespace smsat;

namespace {

std::vector<embed::Embedding> clusters(int per_class, double spread, std::uint64_t seed) {
  CounterRng r(seed);
  std::vector<embed::Embedding> e;
  for (int k = 0; k < kNumClasses; ++k)
    for (int i = 0; i < per_class; ++i) {
      Vector v(4);
      for (auto& x : v) x = spread * r.normal();
      v(k) += 5.0;
      e.push_back({"c" + std::to_string(k) + "_" + std::to_string(i), label_from_index(k), v});
    }
  return e;
}

}  // namespace

TEST_CASE("class geometry by hand") {
  std::vector<embed::Embedding> e = {
      {"a", ClassLabel::SpiritualMeditation, Vector::Zero(2)},
      {"b", ClassLabel::SpiritualMeditation, (Vector(2) << 2, 0).finished()},
      {"c", ClassLabel::Music, (Vector(2) << 0, 4).finished()},
      {"d", ClassLabel::Music, (Vector(2) << 0, 6).finished()},
      {"e", ClassLabel::NormalSilence, (Vector(2) << 10, 0).finished()},
  };
  const auto g = embed::class_geometry(e);
  CHECK(g.centroids.row(0).isApprox((Vector(2) << 1, 0).finished().transpose()));
  CHECK(g.dist_sq(0, 1) == doctest::Approx(1 + 25));
  CHECK(g.dist(0, 1) == doctest::Approx(std::sqrt(26.0)));
  CHECK(g.intra_sq(0) == doctest::Approx(1.0));
  CHECK(g.intra(1) == doctest::Approx(1.0));
  CHECK(g.intra_sq(2) == doctest::Approx(0.0));
  CHECK(g.separability(0, 1) == doctest::Approx(std::sqrt(26.0) / 2.0));
  CHECK(g.counts[2] == 1);
}

TEST_CASE("affinities hit the requested perplexity") {
  const auto e = clusters(6, 1.0, 2);
  const Matrix x = embed::stack_rows(e);
  Vector beta;
  const Matrix p = embed::tsne_affinities(x, 4.0, &beta);
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK((p - p.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(p.diagonal().isZero());
  // Rebuild the conditional rows from beta and check their entropy.
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double z = 0, h = 0;
    Vector w(x.rows());
    for (Eigen::Index j = 0; j < x.rows(); ++j) w(j) = i == j ? 0.0 : std::exp(-beta(i) * (x.row(i) - x.row(j)).squaredNorm());
    z = w.sum();
    for (Eigen::Index j = 0; j < x.rows(); ++j)
      if (w(j) > 0) h -= w(j) / z * std::log(w(j) / z);
    CHECK(h == doctest::Approx(std::log(4.0)).epsilon(1e-4));
  }
  CHECK_THROWS_AS(embed::tsne_affinities(x, 40.0), Error);
}

TEST_CASE("t-SNE gradient matches finite differences of the KL objective") {
  const Matrix x = embed::stack_rows(clusters(3, 1.0, 3));
  const Matrix p = embed::tsne_affinities(x, 3.0);
  CounterRng r(4);
  Matrix y(x.rows(), 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = r.normal();
  const Matrix g = embed::tsne_gradient(p, y);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    Matrix a = y, b = y;
    a.data()[i] += h;
    b.data()[i] -= h;
    const double fd = (embed::tsne_kl(p, a) - embed::tsne_kl(p, b)) / (2 * h);
    CHECK(std::abs(fd - g.data()[i]) / std::max(1.0, std::abs(fd)) < 1e-6);
  }
}

TEST_CASE("t-SNE lowers KL and separates clusters") {
  const auto e = clusters(8, 0.3, 5);
  embed::TsneConfig c;
  c.perplexity = 5;
  c.iters = 300;
  c.momentum_switch = 100;
  c.seed = 1;
  const auto r = embed::tsne(embed::stack_rows(e), c);
  CHECK(r.kl.size() == 301);
  CHECK(r.kl.back() < r.kl.front());
  const auto again = embed::tsne(embed::stack_rows(e), c);
  CHECK(again.y == r.y);
  std::vector<embed::Embedding> laid;
  for (std::size_t i = 0; i < e.size(); ++i) laid.push_back({e[i].id, e[i].label, r.y.row(static_cast<Eigen::Index>(i)).transpose()});
  const auto g = embed::class_geometry(laid);
  CHECK(g.separability(0, 1) > 1.0);
  const std::string svg = embed::tsne_svg(e, r.y);
  CHECK(std::count(svg.begin(), svg.end(), '\n') > 0);
}

TEST_CASE("t-SNE needs at least five points") {
  CHECK_THROWS_AS(embed::tsne_affinities(Matrix::Random(4, 3), 2.0), Error);
}
