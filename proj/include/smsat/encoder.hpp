#pragma once

#include "smsat/augment.hpp"
#include "smsat/features.hpp"
#include "smsat/nn/module.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace smsat::encoder {

struct EncoderConfig {
  std::vector<nn::Index> widths{64, 128, 256, 512};
  std::vector<int> blocks{2, 2, 2, 2};
  nn::Index proj_dim = 128;
  nn::Index n_mels = 64;
  nn::Index frames = 256;
  double width_scale = 1.0;

  /// widths after scaling, each at least 1.
  std::vector<nn::Index> scaled_widths() const;
  void validate() const;
};

nlohmann::json config_to_json(const EncoderConfig& c);
EncoderConfig config_from_json(const nlohmann::json& j);

struct ConvBn {
  nn::Tensor w;  // [out, in, k, k], no bias
  nn::Tensor gamma, beta;
  nn::BatchNormState bn;
  nn::Conv2dSpec spec;

  nn::Tensor forward(const nn::Tensor& x, bool train);
};

struct BasicBlock {
  ConvBn conv1, conv2;
  bool has_down = false;
  ConvBn down;  // 1x1 projection on the skip path
};

/// Residual backbone, global average pooling and a linear projection head.
class Encoder : public nn::Module {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::uint64_t seed);

  /// x: [N, 1, n_mels, frames] -> [N, proj_dim].
  nn::Tensor forward(const nn::Tensor& x, bool train);

  std::vector<nn::ParamRef> parameters() const override;
  std::vector<nn::BufferRef> buffers() override;

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  ConvBn stem_;
  std::vector<BasicBlock> blocks_;
  nn::Tensor proj_w_, proj_b_;
};

Encoder build_encoder(const EncoderConfig& cfg, std::uint64_t seed);
nn::Index count_parameters(const Encoder& m);
/// 2 * multiply-accumulates of every conv and the projection for one input of
/// the configured size. Batchnorm, activations and pooling are not counted.
std::int64_t count_flops(const EncoderConfig& cfg);

/// (1/N) sum_n ||p1_n - p2_n||^2.
nn::Tensor contrastive_loss(const nn::Tensor& p1, const nn::Tensor& p2);
/// -mean over row pairs of log ||p_i - p_j||.
nn::Tensor uniformity_loss(const nn::Tensor& p);
/// Row-wise cosine similarity averaged over the batch.
double mean_cosine(const nn::Tensor& p1, const nn::Tensor& p2);

/// Centre-crops or pads (with the grid minimum) a log-mel grid to `frames`.
Matrix fit_frames(const Matrix& grid, nn::Index frames);
/// Stacks fitted grids into an [N, 1, n_mels, frames] tensor.
nn::Tensor to_batch(const std::vector<Matrix>& grids);

struct EncoderTrainConfig {
  EncoderConfig model;
  features::MelParams mel;
  augment::AugmentConfig aug;
  int epochs = 30;
  int batch = 8;
  double lr = 1e-3;
  double held_out = 0.2;
  bool uniformity = false;
  double uniformity_weight = 0.1;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct EncoderEpoch {
  int epoch = 0;
  double train_loss = 0, val_loss = 0, train_cossim = 0, val_cossim = 0;
  double embed_var = 0;  // mean per-dimension variance of the last training batch
};

struct EncoderRun {
  Encoder model;
  std::vector<EncoderEpoch> history;
  std::vector<std::string> warnings;
  std::vector<std::string> held_out_ids;
};

/// Positive-pair training on augmented log-mel views.
EncoderRun train_encoder(const std::vector<io::AudioClip>& clips, const EncoderTrainConfig& cfg);

std::string history_to_csv(const std::vector<EncoderEpoch>& h);

void save_encoder(const std::filesystem::path& file, Encoder& m, const features::MelParams& mel, std::uint64_t seed);
struct LoadedEncoder {
  Encoder model;
  features::MelParams mel;
};
LoadedEncoder load_encoder(const std::filesystem::path& file);

struct Embedding {
  std::string id;
  ClassLabel label = ClassLabel::NormalSilence;
  Vector v;
};

/// Eval-mode embeddings, one per clip, no augmentation.
std::vector<Embedding> embed_corpus(Encoder& m, const features::MelParams& mel, const std::vector<io::AudioClip>& clips,
                                    int jobs = 1);

std::string embeddings_to_csv(const std::vector<Embedding>& e);
std::vector<Embedding> read_embeddings_csv(const std::filesystem::path& file);

}  // namespace smsat::encoder
