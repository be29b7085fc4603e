#pragma once

#include "smsat/io.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace smsat::validation {

/// x_theo(t) = A(t) cos(2 pi f_c t + phi) with A the analytic envelope of the
/// recorded clip.
struct TheoreticalModel {
  double f_c = 25.0;
  double phase = 0.0;
};

/// Characteristic tone per class: SM 25 Hz, M 20 Hz, NS 30 Hz.
std::array<TheoreticalModel, kNumClasses> default_models();

inline constexpr double kEdgeTrim = 0.05;

struct ValidationRecord {
  std::string id;
  ClassLabel label = ClassLabel::NormalSilence;
  double rmse = 0.0;
  double env_mean = 0.0;
  double env_std = 0.0;
  double energy = 0.0;
  double peak_hz = 0.0;
  double phase = 0.0;  // phase actually used for the reconstruction
};

Vector reconstruct_theoretical(const io::AudioClip& clip, const TheoreticalModel& model);

/// Phase from a 32-point grid on [0, 2 pi) maximizing correlation between
/// the clip and its reconstruction.
double search_phase(const io::AudioClip& clip, double f_c, int grid = 32);

template <typename A, typename B>
double rmse(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  if (x.size() != y.size())
    throw ShapeError("rmse: length mismatch " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  if (x.size() < 1) throw Error("rmse: empty input");
  return std::sqrt((x - y).squaredNorm() / static_cast<double>(x.size()));
}

struct EnvelopeStats {
  double env_mean = 0.0;
  double env_std = 0.0;
  double energy = 0.0;
};

/// Mean and population std of the envelope over the interior (5% trimmed on
/// each side); energy = sum of squared samples over the whole clip.
EnvelopeStats envelope_stats(const io::AudioClip& clip);

struct ValidateOptions {
  std::array<TheoreticalModel, kNumClasses> models = default_models();
  bool phase_search = false;
  int jobs = 1;
};

ValidationRecord validate_clip(const io::AudioClip& clip, const ValidateOptions& opt);

struct ClassSummary {
  int n = 0;
  double rmse_mean = 0.0;
  double env_mean = 0.0;
  double env_std = 0.0;
  double energy_mean = 0.0;
  double peak_hz = 0.0;  // peak of the class-mean magnitude spectrum
  Vector mean_spectrum;  // one-sided, bin spacing spectrum_bin_hz
  double spectrum_bin_hz = 0.0;
};

struct ValidationReport {
  std::vector<ValidationRecord> per_clip;
  std::array<std::optional<ClassSummary>, kNumClasses> per_class;
  std::vector<std::string> warnings;
};

/// Reduce per-clip records (manifest order) into per-class means.
ValidationReport validate_clips(const std::vector<io::AudioClip>& clips, const ValidateOptions& opt);
ValidationReport validate_corpus(const io::CorpusManifest& manifest, const ValidateOptions& opt);

nlohmann::json report_to_json(const ValidationReport& r);
std::string report_to_csv(const ValidationReport& r);

/// Raw vs theoretical signal (first `seconds`) and both magnitude spectra up
/// to `max_hz`.
std::string overlay_svg(const io::AudioClip& clip, const TheoreticalModel& model, double seconds = 0.5,
                        double max_hz = 100.0);

}  // namespace smsat::validation
