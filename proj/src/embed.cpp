#include "smsat/embed.hpp"

#include "smsat/svg.hpp"
#include "smsat/text.hpp"

#include <cmath>
#include <limits>

namespace smsat::embed {

ClassGeometry class_geometry(const std::vector<Embedding>& e) {
  if (e.empty()) throw Error("class_geometry: no embeddings");
  const Eigen::Index d = e[0].v.size();
  ClassGeometry g;
  g.centroids = Matrix::Zero(kNumClasses, d);
  for (const auto& x : e) {
    if (x.v.size() != d) throw ShapeError("class_geometry: embeddings have inconsistent lengths");
    g.centroids.row(label_index(x.label)) += x.v.transpose();
    ++g.counts[label_index(x.label)];
  }
  for (auto l : kAllLabels) {
    const int k = label_index(l);
    if (g.counts[k] == 0) throw Error("class_geometry: class " + std::string(label_name(l)) + " has no embeddings");
    g.centroids.row(k) /= static_cast<double>(g.counts[k]);
  }
  g.intra_sq = Vector::Zero(kNumClasses);
  g.intra = Vector::Zero(kNumClasses);
  for (const auto& x : e) {
    const int k = label_index(x.label);
    const double sq = (x.v.transpose() - g.centroids.row(k)).squaredNorm();
    g.intra_sq(k) += sq;
    g.intra(k) += std::sqrt(sq);
  }
  for (int k = 0; k < kNumClasses; ++k) {
    g.intra_sq(k) /= g.counts[k];
    g.intra(k) /= g.counts[k];
  }
  g.dist_sq = Matrix::Zero(kNumClasses, kNumClasses);
  for (int i = 0; i < kNumClasses; ++i)
    for (int j = i + 1; j < kNumClasses; ++j)
      g.dist_sq(i, j) = g.dist_sq(j, i) = (g.centroids.row(i) - g.centroids.row(j)).squaredNorm();
  g.dist = g.dist_sq.cwiseSqrt();
  g.separability = separability(g);
  return g;
}

Matrix separability(const ClassGeometry& g) {
  Matrix s = Matrix::Zero(kNumClasses, kNumClasses);
  for (int i = 0; i < kNumClasses; ++i)
    for (int j = 0; j < kNumClasses; ++j)
      if (i != j)
        s(i, j) = std::sqrt(g.dist_sq(i, j)) /
                  (std::sqrt(g.intra_sq(i)) + std::sqrt(g.intra_sq(j)) + kSeparabilityEps);
  return s;
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

nlohmann::json geometry_to_json(const ClassGeometry& g) {
  nlohmann::json classes = nlohmann::json::array();
  for (auto l : kAllLabels) {
    const int k = label_index(l);
    classes.push_back({{"label", label_name(l)},
                       {"count", g.counts[k]},
                       {"intra_mean_squared", g.intra_sq(k)},
                       {"intra_mean_unsquared", g.intra(k)}});
  }
  nlohmann::json order = nlohmann::json::array();
  for (auto l : kAllLabels) order.push_back(label_name(l));
  return {{"class_order", order},
          {"classes", classes},
          {"centroids", matrix_json(g.centroids)},
          {"inter_distance_squared", matrix_json(g.dist_sq)},
          {"inter_distance_unsquared", matrix_json(g.dist)},
          {"separability", matrix_json(g.separability)},
          {"separability_definition",
           "toolkit-defined: sqrt(D_ij) / (sqrt(intra_i) + sqrt(intra_j) + 1e-12), intra = mean squared distance to centroid"}};
}

Matrix stack_rows(const std::vector<Embedding>& e) {
  if (e.empty()) return {};
  Matrix x(static_cast<Eigen::Index>(e.size()), e[0].v.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e[i].v.size() != x.cols()) throw ShapeError("stack_rows: embeddings have inconsistent lengths");
    x.row(static_cast<Eigen::Index>(i)) = e[i].v.transpose();
  }
  return x;
}

namespace {

Matrix pairwise_sq(const Matrix& x) {
  const Vector sq = x.rowwise().squaredNorm();
  Matrix d = (-2.0 * x * x.transpose()).colwise() + sq;
  d.rowwise() += sq.transpose();
  return d.cwiseMax(0.0);
}

}  // namespace

Matrix tsne_affinities(const Matrix& x, double perplexity, Vector* beta_out) {
  const Eigen::Index n = x.rows();
  if (n < 5) throw Error("tsne: need at least 5 points, got " + std::to_string(n));
  if (!(perplexity >= 1.0) || perplexity >= static_cast<double>(n))
    throw Error("tsne: perplexity " + text::fmt(perplexity) + " infeasible for " + std::to_string(n) + " points");
  const Matrix d = pairwise_sq(x);
  const double target = std::log(perplexity);
  Matrix p = Matrix::Zero(n, n);
  Vector betas(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    Vector row(n);
    for (int it = 0; it < 200; ++it) {
      // Shift by the nearest neighbour distance for stability.
      double dmin = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j)
        if (j != i) dmin = std::min(dmin, d(i, j));
      double z = 0.0, dz = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row(j) = j == i ? 0.0 : std::exp(-beta * (d(i, j) - dmin));
        z += row(j);
        dz += row(j) * (d(i, j) - dmin);
      }
      const double h = std::log(z) + beta * dz / z;
      row /= z;
      if (std::abs(h - target) < 1e-5) break;
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    p.row(i) = row.transpose();
    betas(i) = beta;
  }
  if (beta_out) *beta_out = betas;
  Matrix sym = ((p + p.transpose()) / (2.0 * static_cast<double>(n))).cwiseMax(1e-12);
  sym.diagonal().setZero();
  return sym;
}

Matrix tsne_q(const Matrix& y) {
  Matrix num = (1.0 + pairwise_sq(y).array()).inverse().matrix();
  num.diagonal().setZero();
  return num / num.sum();
}

double tsne_kl(const Matrix& p, const Matrix& y) {
  const Matrix q = tsne_q(y);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (i != j && p(i, j) > 0.0) kl += p(i, j) * std::log(p(i, j) / std::max(q(i, j), 1e-300));
  return kl;
}

Matrix tsne_gradient(const Matrix& p, const Matrix& y) {
  Matrix num = (1.0 + pairwise_sq(y).array()).inverse().matrix();
  num.diagonal().setZero();
  const Matrix q = num / num.sum();
  const Matrix w = ((p - q).array() * num.array()).matrix();
  // dC/dy_i = 4 sum_j w_ij (y_i - y_j)
  return 4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);
}

TsneResult tsne_from_affinities(const Matrix& p, const Matrix& init, const TsneConfig& cfg) {
  if (p.rows() != p.cols() || p.rows() != init.rows() || init.cols() != 2)
    throw ShapeError("tsne: affinities " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) + " vs layout " +
                     std::to_string(init.rows()) + "x" + std::to_string(init.cols()));
  TsneResult r;
  r.y = init;
  Matrix vel = Matrix::Zero(init.rows(), 2);
  for (int it = 0; it < cfg.iters; ++it) {
    r.kl.push_back(tsne_kl(p, r.y));
    const double momentum = it < cfg.momentum_switch ? 0.5 : 0.8;
    const double ex = it < cfg.momentum_switch ? cfg.exaggeration : 1.0;
    const Matrix g = tsne_gradient(ex == 1.0 ? p : Matrix(p * ex), r.y);
    vel = momentum * vel - cfg.lr * g;
    r.y += vel;
    r.y.rowwise() -= r.y.colwise().mean();
  }
  r.kl.push_back(tsne_kl(p, r.y));
  return r;
}

TsneResult tsne(const Matrix& x, const TsneConfig& cfg) {
  Vector beta;
  const Matrix p = tsne_affinities(x, cfg.perplexity, &beta);
  CounterRng rng(cfg.seed);
  Matrix init(x.rows(), 2);
  for (Eigen::Index i = 0; i < init.size(); ++i) init.data()[i] = 1e-2 * rng.normal();
  TsneResult r = tsne_from_affinities(p, init, cfg);
  r.beta = beta;
  return r;
}

std::string tsne_to_csv(const std::vector<Embedding>& e, const Matrix& y) {
  if (static_cast<Eigen::Index>(e.size()) != y.rows()) throw ShapeError("tsne_to_csv: point count mismatch");
  text::CsvWriter csv({"id", "label", "x", "y"});
  for (std::size_t i = 0; i < e.size(); ++i)
    csv.row({e[i].id, std::string(label_name(e[i].label)), text::fmt(y(static_cast<Eigen::Index>(i), 0)),
             text::fmt(y(static_cast<Eigen::Index>(i), 1))});
  return csv.str();
}

std::string tsne_svg(const std::vector<Embedding>& e, const Matrix& y) {
  std::vector<svg::ScatterGroup> groups;
  for (auto l : kAllLabels) {
    svg::ScatterGroup g{std::string(label_name(l)), {}, {}, std::nullopt};
    double cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i)
      if (e[i].label == l) {
        g.x.push_back(y(static_cast<Eigen::Index>(i), 0));
        g.y.push_back(y(static_cast<Eigen::Index>(i), 1));
        cx += g.x.back();
        cy += g.y.back();
      }
    if (!g.x.empty()) g.centroid = std::make_pair(cx / static_cast<double>(g.x.size()), cy / static_cast<double>(g.y.size()));
    groups.push_back(std::move(g));
  }
  return svg::scatter(groups, {"t-SNE of embeddings", "dim 1", "dim 2"});
}

std::string kl_svg(const std::vector<double>& kl) {
  svg::Series s{"KL(P||Q)", {}, {}};
  for (std::size_t i = 0; i < kl.size(); ++i) {
    s.x.push_back(static_cast<double>(i));
    s.y.push_back(kl[i]);
  }
  return svg::line_chart({s}, {"t-SNE cost", "iteration", "KL divergence"});
}

}  // namespace smsat::embed
