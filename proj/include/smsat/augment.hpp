#pragma once

#include "smsat/features.hpp"
#include "smsat/io.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace smsat::augment {

struct AugmentConfig {
  double noise_sigma_rel = 0.01;             // sigma as a fraction of max|x|
  std::optional<double> noise_sigma_abs;     // overrides the relative form
  double stretch_lo = 0.8;
  double stretch_hi = 1.25;
  double pitch_k = 2.0;                      // semitones
  int freq_mask_max = 8;                     // mel bins
  int time_mask_max = 20;                    // frames
  int variants_per_clip = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr Eigen::Index kVocoderWindow = 1024;
inline constexpr Eigen::Index kVocoderHop = 256;

io::AudioClip add_gaussian_noise(const io::AudioClip& clip, double sigma, std::uint64_t seed);

/// Phase-vocoder stretch. r > 1 shortens the clip; the output has
/// round(N / r) samples and keeps the pitch.
io::AudioClip time_stretch(const io::AudioClip& clip, double r);

/// Shifts pitch by 2^(s/12) keeping the sample count.
io::AudioClip pitch_shift(const io::AudioClip& clip, double semitones);

/// Sets one contiguous band of U{0..f_max} rows and one span of U{0..t_max}
/// columns to the grid minimum.
features::TimeFreqGrid spec_mask(const features::TimeFreqGrid& grid, int f_max, int t_max, std::uint64_t seed);

/// Noise, stretch and pitch with draws keyed by (cfg.seed, clip.id, variant).
/// Variant k (1-based) gets id "<clip.id>.aug<k>".
std::vector<io::AudioClip> augment_pipeline(const io::AudioClip& clip, const AugmentConfig& cfg);

/// Single variant of augment_pipeline with an explicit key, used by the
/// encoder trainer to draw fresh views every step.
io::AudioClip random_variant(const io::AudioClip& clip, const AugmentConfig& cfg, std::uint64_t key);

}  // namespace smsat::augment
