#pragma once

#include "smsat/dsp.hpp"
#include "smsat/io.hpp"

#include <array>
#include <string>
#include <string_view>

namespace smsat::features {

enum class GridDomain { LinearPower, LogMel };

/// Rows are frequency or mel bins, columns are frames.
struct TimeFreqGrid {
  Matrix values;
  GridDomain domain = GridDomain::LogMel;
  Vector row_axis;         // bin centre in Hz (linear) or filter centre in Hz (mel)
  double frame_hop_s = 0;  // seconds between frames
  std::string window = "hann";

  Eigen::Index bins() const { return values.rows(); }
  Eigen::Index frames() const { return values.cols(); }
};

struct MelParams {
  Eigen::Index n_fft = 512;
  Eigen::Index win = 400;
  Eigen::Index hop = 160;
  Eigen::Index n_mels = 64;
  double f_lo = 0.0;
  double f_hi = 8000.0;
};

inline constexpr double kLogEps = 1e-10;

nlohmann::json mel_params_to_json(const MelParams& p);
/// Missing keys keep their defaults.
MelParams mel_params_from_json(const nlohmann::json& j);

/// Log-mel spectrogram: log(H * |STFT|^2 + eps), shape (n_mels, frames).
TimeFreqGrid mel_spectrogram(const io::AudioClip& clip, const MelParams& p = {});
/// Variant reusing a prebuilt filterbank (must match p and clip.rate).
TimeFreqGrid mel_spectrogram(const io::AudioClip& clip, const MelParams& p, const dsp::MelFilterbank& fb);

inline constexpr int kNumMfcc = 13;
inline constexpr int kWaveletLevels = 5;
inline constexpr int kFeatureDim = 25;

/// Frame-averaged DCT-II of log-mel columns, coefficients 0..12.
Eigen::Matrix<double, kNumMfcc, 1> mfcc13(const io::AudioClip& clip, const MelParams& p = {});
Eigen::Matrix<double, kNumMfcc, 1> mfcc13_from_grid(const TimeFreqGrid& log_mel);

/// Fraction of adjacent pairs with a strictly negative product.
double zcr(const Eigen::Ref<const Vector>& x);
double rms(const Eigen::Ref<const Vector>& x);

enum class Wavelet { Haar, Daubechies4 };
std::string_view wavelet_name(Wavelet w);
Wavelet parse_wavelet(std::string_view name);

/// One analysis level: approximation and detail of a signal padded
/// symmetrically to even length.
struct DwtLevel {
  Vector approx;
  Vector detail;
};
DwtLevel dwt_step(const Eigen::Ref<const Vector>& x, Wavelet w = Wavelet::Haar);

/// Mean and population std of detail coefficients for levels 1..5, ordered
/// [mu_1, sd_1, ..., mu_5, sd_5]. Needs at least 32 samples.
Eigen::Matrix<double, 2 * kWaveletLevels, 1> wavelet_stats(const Eigen::Ref<const Vector>& x, Wavelet w = Wavelet::Haar);

using FeatureVector25 = Eigen::Matrix<double, kFeatureDim, 1>;

struct FeatureOptions {
  MelParams mel;
  Wavelet wavelet = Wavelet::Haar;
};

/// [MFCC_0..12, ZCR, RMS, W1_mu, W1_sd, ..., W5_mu, W5_sd].
FeatureVector25 extract_features(const io::AudioClip& clip, const FeatureOptions& opt = {});

/// Column names in output order.
const std::array<std::string, kFeatureDim>& feature_names();

struct FeatureRow {
  std::string id;
  ClassLabel label = ClassLabel::NormalSilence;
  FeatureVector25 x;
};

std::string features_to_csv(const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> read_features_csv(const std::filesystem::path& file);

}  // namespace smsat::features
