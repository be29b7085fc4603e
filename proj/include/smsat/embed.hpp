#pragma once

#include "smsat/encoder.hpp"

#include <json.hpp>

#include <array>
#include <string>
#include <vector>

namespace smsat::embed {

using encoder::Embedding;

/// Rows of `centroids` and both axes of the matrices are indexed by label_index().
struct ClassGeometry {
  Matrix centroids;
  std::array<int, kNumClasses> counts{};
  Matrix dist_sq;        // ||c_i - c_j||^2
  Matrix dist;           // ||c_i - c_j||
  Vector intra_sq;       // mean ||x - c_k||^2 over members
  Vector intra;          // mean ||x - c_k|| over members
  Matrix separability;   // filled by separability()
};

ClassGeometry class_geometry(const std::vector<Embedding>& e);

inline constexpr double kSeparabilityEps = 1e-12;
/// sqrt(D_ij) / (sqrt(intra_sq_i) + sqrt(intra_sq_j) + eps).
Matrix separability(const ClassGeometry& g);

nlohmann::json geometry_to_json(const ClassGeometry& g);

struct TsneConfig {
  double perplexity = 30.0;
  double lr = 200.0;
  int iters = 1000;
  int momentum_switch = 250;
  double exaggeration = 1.0;   // multiplies P before the momentum switch
  std::uint64_t seed = 0;
};

struct TsneResult {
  Matrix y;                    // n x 2
  std::vector<double> kl;      // KL(P || Q) before each update, then after the last
  Vector beta;                 // per-point Gaussian precision found by the search
};

/// Symmetric affinities p_ij = (p_j|i + p_i|j) / 2n with per-point bandwidth
/// matched to log(perplexity) within 1e-5 nats.
Matrix tsne_affinities(const Matrix& x, double perplexity, Vector* beta = nullptr);
/// Student-t similarities of the 2-D layout, normalized over i != j.
Matrix tsne_q(const Matrix& y);
double tsne_kl(const Matrix& p, const Matrix& y);
/// dKL/dY, n x 2.
Matrix tsne_gradient(const Matrix& p, const Matrix& y);

/// x is n x d with one row per point.
TsneResult tsne(const Matrix& x, const TsneConfig& cfg);
/// Runs the optimizer from given affinities and starting layout.
TsneResult tsne_from_affinities(const Matrix& p, const Matrix& init, const TsneConfig& cfg);

Matrix stack_rows(const std::vector<Embedding>& e);

std::string tsne_to_csv(const std::vector<Embedding>& e, const Matrix& y);
/// Points per class with their 2-D centroids.
std::string tsne_svg(const std::vector<Embedding>& e, const Matrix& y);
std::string kl_svg(const std::vector<double>& kl);

}  // namespace smsat::embed
