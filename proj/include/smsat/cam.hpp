#pragma once

#include "smsat/features.hpp"
#include "smsat/nn/module.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace smsat::cam {

/// How the 25 features reach the recurrence.
enum class SeqMode {
  Sequence,    // 25 steps of one scalar each
  SingleStep,  // one step of the whole vector
};
std::string_view seq_mode_name(SeqMode m);
SeqMode parse_seq_mode(std::string_view s);

struct CamConfig {
  nn::Index input_dim = features::kFeatureDim;
  nn::Index hidden = 256;  // per direction
  nn::Index fc = 128;
  double dropout = 0.3;
  nn::Index classes = kNumClasses;
  double lr = 0.005;
  int epochs = 350;
  int batch = 512;
  double test_frac = 0.2;
  SeqMode mode = SeqMode::Sequence;
  std::uint64_t seed = 0;

  nn::Index step_input() const { return mode == SeqMode::Sequence ? 1 : input_dim; }
  nn::Index steps() const { return mode == SeqMode::Sequence ? input_dim : 1; }
  void validate() const;
};

nlohmann::json config_to_json(const CamConfig& c);
CamConfig config_from_json(const nlohmann::json& j);

/// Total / count_c per class.
std::array<double, kNumClasses> class_weights(const std::array<int, kNumClasses>& counts);
/// Draws with replacement, P(i) proportional to weights[label_i].
std::vector<std::size_t> weighted_sampler(const std::vector<ClassLabel>& labels,
                                          const std::array<double, kNumClasses>& weights, std::size_t n_draws,
                                          std::uint64_t seed);

/// Bidirectional LSTM over the (standardized) feature vector, then
/// FC-ReLU-dropout-FC.
class Cam : public nn::Module {
 public:
  Cam() = default;
  Cam(const CamConfig& cfg, std::uint64_t seed);

  /// [N, input_dim] -> [N, 2 * hidden]: last forward state ++ last backward state.
  nn::Tensor encode(const nn::Tensor& x) const;
  /// Logits [N, classes]. `rng` drives dropout in training mode.
  nn::Tensor forward(const nn::Tensor& x, bool train, CounterRng* rng = nullptr) const;
  /// Row-wise class probabilities in eval mode.
  Matrix predict_proba(const Matrix& x) const;

  /// Stores z-score statistics applied to raw features before forward().
  void set_normalizer(const Vector& mean, const Vector& std);
  nn::Tensor normalize(const Matrix& raw) const;

  std::vector<nn::ParamRef> parameters() const override;
  std::vector<nn::BufferRef> buffers() override;

  const CamConfig& config() const { return cfg_; }
  nn::LstmWeights& fwd() { return fwd_; }
  nn::LstmWeights& bwd() { return bwd_; }

 private:
  CamConfig cfg_;
  nn::LstmWeights fwd_, bwd_;
  nn::Tensor fc1_w_, fc1_b_, fc2_w_, fc2_b_;
  nn::Array norm_mean_, norm_std_;
};

Cam build_cam(const CamConfig& cfg, std::uint64_t seed);

struct EvalReport {
  Eigen::Matrix<long, kNumClasses, kNumClasses> confusion;  // rows true, columns predicted
  std::array<double, kNumClasses> class_accuracy{}, precision{}, recall{}, f1{};
  std::array<long, kNumClasses> support{};
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

EvalReport report_from_confusion(const Eigen::Matrix<long, kNumClasses, kNumClasses>& confusion);
nlohmann::json report_to_json(const EvalReport& r);
std::string confusion_to_csv(const EvalReport& r);

struct CamEpoch {
  int epoch = 0;
  double loss = 0.0;
  double acc = 0.0;       // on the sampled training draws
  double test_acc = 0.0;  // held-out split, eval mode
  double seconds = 0.0;
};

struct CamRun {
  Cam model;
  std::vector<CamEpoch> history;
  EvalReport train_report, test_report;
  std::vector<std::string> test_ids;
};

/// Stratified split, weighted sampling, cross-entropy with Adam.
CamRun train_cam(const std::vector<features::FeatureRow>& rows, const CamConfig& cfg, int jobs = 1);

EvalReport evaluate(const Cam& m, const std::vector<features::FeatureRow>& rows, int jobs = 1);

std::string history_to_csv(const std::vector<CamEpoch>& h);

void save_cam(const std::filesystem::path& file, Cam& m);
Cam load_cam(const std::filesystem::path& file);

}  // namespace smsat::cam
