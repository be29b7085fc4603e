#pragma once

#include "smsat/augment.hpp"
#include "smsat/cam.hpp"
#include "smsat/embed.hpp"
#include "smsat/encoder.hpp"
#include "smsat/features.hpp"
#include "smsat/io.hpp"
#include "smsat/validation.hpp"

#include <json.hpp>

#include <filesystem>

namespace smsat {

/// Everything a pipeline run depends on besides its input files. Nested seeds
/// are derived from `seed`, so one value pins the whole run.
struct RunConfig {
  std::uint64_t seed = 0;
  int jobs = 1;
  std::filesystem::path out = "out";
  io::ClassDirMap class_dirs = io::default_class_dirs();
  io::SynthConfig synth;
  validation::ValidateOptions validation;
  augment::AugmentConfig augment;
  features::FeatureOptions features;
  encoder::EncoderTrainConfig encoder;
  cam::CamConfig cam;
  embed::TsneConfig tsne;

  /// Child seed for one pipeline stage.
  std::uint64_t stage_seed(std::string_view stage) const;
};

nlohmann::json config_to_json(const RunConfig& c);
/// Overlays `user` on the defaults. Unknown keys and type mismatches are
/// errors naming the key path; so is a key the overlay removed.
RunConfig config_from_json(const nlohmann::json& user);
RunConfig load_config(const std::filesystem::path& file);

}  // namespace smsat
