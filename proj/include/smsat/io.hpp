#pragma once

#include "smsat/common.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace smsat::io {

namespace fs = std::filesystem;

inline constexpr int kCanonicalRate = 16000;

/// Mono audio with its class label. Samples are nominally in [-1, 1].
struct AudioClip {
  Vector samples;
  int rate = kCanonicalRate;
  ClassLabel label = ClassLabel::NormalSilence;
  std::string id;

  double duration_s() const { return static_cast<double>(samples.size()) / static_cast<double>(rate); }
};

/// Reads RIFF/WAVE PCM16 or float32, mono or stereo (averaged to mono).
/// The clip id is the file stem; the label is left at its default.
AudioClip load_wav(const fs::path& path);

/// Writes 16-bit PCM mono, clamping to [-1, 1] before quantization.
void save_wav(const AudioClip& clip, const fs::path& path);

/// Directory name for each label, indexed by label_index().
using ClassDirMap = std::array<std::string, kNumClasses>;
ClassDirMap default_class_dirs();

struct ManifestEntry {
  std::string path;  // relative to CorpusManifest::base, '/' separators
  ClassLabel label = ClassLabel::NormalSilence;
  double duration_s = 0.0;
  int rate = 0;
};

struct CorpusManifest {
  fs::path base;
  std::vector<ManifestEntry> entries;
  std::array<int, kNumClasses> counts{};

  fs::path resolve(const ManifestEntry& e) const { return base / e.path; }
  void recount();
};

/// Scans `root/<class dir>/*.wav` for each mapped class. Entries are sorted by
/// relative path. Unmapped subdirectories are skipped and reported through
/// `warnings` when given.
CorpusManifest build_manifest(const fs::path& root, const ClassDirMap& dirs = default_class_dirs(),
                              std::vector<std::string>* warnings = nullptr);

nlohmann::json manifest_to_json(const CorpusManifest& m, const fs::path& relative_to);
CorpusManifest manifest_from_json(const nlohmann::json& j, const fs::path& base);

/// Writes the manifest with entry paths made relative to the file's directory.
void save_manifest(const CorpusManifest& m, const fs::path& file);
CorpusManifest load_manifest(const fs::path& file);

/// Loads one manifest entry with id "<parent dir>/<stem>" and resamples to
/// `target_rate` when it differs.
AudioClip load_entry(const CorpusManifest& m, const ManifestEntry& e, int target_rate = kCanonicalRate);

/// Windowed-sinc interpolation (64 taps, Kaiser beta = 8, cutoff at
/// min(in, out) / 2). Output length is round(N * out / in).
AudioClip resample(const AudioClip& clip, int target_rate);

/// Same kernel with real-valued rates and an explicit output length.
Vector resample_samples(const Eigen::Ref<const Vector>& x, double in_rate, double out_rate, Eigen::Index out_len);

struct SynthConfig {
  int n_per_class = 8;
  double duration_s = 3.0;
  int rate = kCanonicalRate;
  /// Class tone frequencies (Hz), indexed by label_index().
  std::array<double, kNumClasses> tone_hz{25.0, 20.0, 30.0};
  /// Mean envelope level per class; the envelope stays within +/-50% of it.
  std::array<double, kNumClasses> level{0.35, 0.6, 0.2};
  /// Absolute noise standard deviation. When zero, `snr_db` is used instead.
  double noise_sigma = 0.0;
  double snr_db = std::numeric_limits<double>::infinity();
};

/// Clip plus the noiseless envelope that generated it.
struct SynthClip {
  AudioClip clip;
  Vector envelope;
};

/// A(t) cos(2 pi f_c t) + noise for every class, deterministic in (cfg, seed).
std::vector<SynthClip> synth_clips(const SynthConfig& cfg, std::uint64_t seed);

/// Writes synth_clips() under `root/<class dir>/<id>.wav` and returns the
/// resulting manifest.
CorpusManifest synth_corpus(const SynthConfig& cfg, std::uint64_t seed, const fs::path& root,
                            const ClassDirMap& dirs = default_class_dirs());

}  // namespace smsat::io
