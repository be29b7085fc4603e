#include "smsat/config.hpp"

#include "smsat/text.hpp"

namespace smsat {

using nlohmann::json;

std::uint64_t RunConfig::stage_seed(std::string_view stage) const { return CounterRng(seed).derive(stage).key(); }

namespace {

template <typename T, std::size_t N>
json by_label(const std::array<T, N>& a) {
  json j = json::object();
  for (auto l : kAllLabels) j[std::string(label_name(l))] = a[label_index(l)];
  return j;
}

json synth_json(const io::SynthConfig& s) {
  return {{"n_per_class", s.n_per_class}, {"duration_s", s.duration_s}, {"rate", s.rate},
          {"tone_hz", by_label(s.tone_hz)}, {"level", by_label(s.level)}, {"noise_sigma", s.noise_sigma},
          // JSON has no infinity; null means a noiseless corpus.
          {"snr_db", std::isfinite(s.snr_db) ? json(s.snr_db) : json(nullptr)}};
}

json augment_json(const augment::AugmentConfig& a) {
  return {{"noise_sigma_rel", a.noise_sigma_rel},
          {"noise_sigma_abs", a.noise_sigma_abs ? json(*a.noise_sigma_abs) : json(nullptr)},
          {"stretch_lo", a.stretch_lo},
          {"stretch_hi", a.stretch_hi},
          {"pitch_semitones", a.pitch_k},
          {"freq_mask_max", a.freq_mask_max},
          {"time_mask_max", a.time_mask_max},
          {"variants_per_clip", a.variants_per_clip}};
}

json encoder_json(const encoder::EncoderTrainConfig& e) {
  json j = encoder::config_to_json(e.model);
  j.erase("n_mels");
  j["epochs"] = e.epochs;
  j["batch"] = e.batch;
  j["lr"] = e.lr;
  j["held_out"] = e.held_out;
  j["uniformity"] = e.uniformity;
  j["uniformity_weight"] = e.uniformity_weight;
  return j;
}

json cam_json(const cam::CamConfig& c) {
  json j = cam::config_to_json(c);
  j.erase("seed");
  j.erase("input_dim");
  j.erase("classes");
  return j;
}

// Keys whose default is null accept a number too.
const char* kNullableKeys[] = {"synth.snr_db", "augment.noise_sigma_abs"};

bool nullable(const std::string& path) {
  for (const char* k : kNullableKeys)
    if (path == k) return true;
  return false;
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

void check_overlay(const json& defaults, const json& user, const std::string& prefix) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!defaults.contains(it.key())) throw Error("unknown config key '" + path + "'");
    const json& d = defaults.at(it.key());
    const json& u = it.value();
    if (u.is_null() || (nullable(path) && u.is_number())) continue;
    if (!same_kind(d, u)) throw Error("config key '" + path + "': expected " + std::string(d.type_name()) + ", got " + u.type_name());
    if (d.is_object()) check_overlay(d, u, path);
  }
}

class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& at(const std::string& path) const {
    const json* cur = &root_;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      // A null overlay removes the key during the merge.
      static const json kNull;
      if (dot == std::string::npos && nullable(path) && cur->is_object() && !cur->contains(key)) return kNull;
      if (!cur->is_object() || !cur->contains(key) || (cur->at(key).is_null() && !nullable(path)))
        throw Error("missing config key '" + path + "'");
      cur = &cur->at(key);
      if (dot == std::string::npos) return *cur;
      start = dot + 1;
    }
  }

  template <typename T>
  T get(const std::string& path) const {
    try {
      return at(path).get<T>();
    } catch (const json::exception&) {
      throw Error("config key '" + path + "' has the wrong type");
    }
  }

  template <typename T>
  std::array<T, kNumClasses> labels(const std::string& path) const {
    std::array<T, kNumClasses> out{};
    for (auto l : kAllLabels) out[label_index(l)] = get<T>(path + "." + std::string(label_name(l)));
    return out;
  }

 private:
  const json& root_;
};

}  // namespace

json config_to_json(const RunConfig& c) {
  json models = json::object();
  for (auto l : kAllLabels) models[std::string(label_name(l))] = c.validation.models[label_index(l)].f_c;
  return {{"seed", c.seed},
          {"jobs", c.jobs},
          {"out", c.out.generic_string()},
          {"class_dirs", by_label(c.class_dirs)},
          {"synth", synth_json(c.synth)},
          {"validation", {{"f_c", models}, {"phase_search", c.validation.phase_search}}},
          {"augment", augment_json(c.augment)},
          {"features", {{"mel", features::mel_params_to_json(c.features.mel)}, {"wavelet", features::wavelet_name(c.features.wavelet)}}},
          {"encoder", encoder_json(c.encoder)},
          {"cam", cam_json(c.cam)},
          {"tsne",
           {{"perplexity", c.tsne.perplexity},
            {"lr", c.tsne.lr},
            {"iters", c.tsne.iters},
            {"momentum_switch", c.tsne.momentum_switch},
            {"exaggeration", c.tsne.exaggeration}}}};
}

RunConfig config_from_json(const json& user) {
  if (!user.is_object()) throw Error("config must be a JSON object");
  const json defaults = config_to_json(RunConfig{});
  check_overlay(defaults, user, "");
  json merged = defaults;
  merged.merge_patch(user);
  const Reader r(merged);

  RunConfig c;
  c.seed = r.get<std::uint64_t>("seed");
  c.jobs = r.get<int>("jobs");
  if (c.jobs < 1) throw Error("config key 'jobs' must be >= 1");
  c.out = r.get<std::string>("out");
  c.class_dirs = r.labels<std::string>("class_dirs");

  c.synth.n_per_class = r.get<int>("synth.n_per_class");
  c.synth.duration_s = r.get<double>("synth.duration_s");
  c.synth.rate = r.get<int>("synth.rate");
  c.synth.tone_hz = r.labels<double>("synth.tone_hz");
  c.synth.level = r.labels<double>("synth.level");
  c.synth.noise_sigma = r.get<double>("synth.noise_sigma");
  const json& snr = r.at("synth.snr_db");
  c.synth.snr_db = snr.is_null() ? std::numeric_limits<double>::infinity() : snr.get<double>();

  const auto f_c = r.labels<double>("validation.f_c");
  for (int k = 0; k < kNumClasses; ++k) c.validation.models[k].f_c = f_c[k];
  c.validation.phase_search = r.get<bool>("validation.phase_search");

  c.augment.noise_sigma_rel = r.get<double>("augment.noise_sigma_rel");
  const json& abs_sigma = r.at("augment.noise_sigma_abs");
  if (!abs_sigma.is_null()) c.augment.noise_sigma_abs = abs_sigma.get<double>();
  c.augment.stretch_lo = r.get<double>("augment.stretch_lo");
  c.augment.stretch_hi = r.get<double>("augment.stretch_hi");
  c.augment.pitch_k = r.get<double>("augment.pitch_semitones");
  c.augment.freq_mask_max = r.get<int>("augment.freq_mask_max");
  c.augment.time_mask_max = r.get<int>("augment.time_mask_max");
  c.augment.variants_per_clip = r.get<int>("augment.variants_per_clip");
  c.augment.validate();

  c.features.mel = features::mel_params_from_json(r.at("features.mel"));
  c.features.wavelet = features::parse_wavelet(r.get<std::string>("features.wavelet"));

  auto& e = c.encoder;
  e.model.widths = r.get<std::vector<nn::Index>>("encoder.widths");
  e.model.blocks = r.get<std::vector<int>>("encoder.blocks");
  e.model.proj_dim = r.get<nn::Index>("encoder.proj_dim");
  e.model.frames = r.get<nn::Index>("encoder.frames");
  e.model.width_scale = r.get<double>("encoder.width_scale");
  e.model.n_mels = c.features.mel.n_mels;
  e.model.validate();
  e.epochs = r.get<int>("encoder.epochs");
  e.batch = r.get<int>("encoder.batch");
  e.lr = r.get<double>("encoder.lr");
  e.held_out = r.get<double>("encoder.held_out");
  e.uniformity = r.get<bool>("encoder.uniformity");
  e.uniformity_weight = r.get<double>("encoder.uniformity_weight");
  e.mel = c.features.mel;
  e.aug = c.augment;

  c.cam.hidden = r.get<nn::Index>("cam.hidden");
  c.cam.fc = r.get<nn::Index>("cam.fc");
  c.cam.dropout = r.get<double>("cam.dropout");
  c.cam.lr = r.get<double>("cam.lr");
  c.cam.epochs = r.get<int>("cam.epochs");
  c.cam.batch = r.get<int>("cam.batch");
  c.cam.test_frac = r.get<double>("cam.test_frac");
  c.cam.mode = cam::parse_seq_mode(r.get<std::string>("cam.mode"));
  c.cam.validate();

  c.tsne.perplexity = r.get<double>("tsne.perplexity");
  c.tsne.lr = r.get<double>("tsne.lr");
  c.tsne.iters = r.get<int>("tsne.iters");
  c.tsne.momentum_switch = r.get<int>("tsne.momentum_switch");
  c.tsne.exaggeration = r.get<double>("tsne.exaggeration");
  return c;
}

RunConfig load_config(const std::filesystem::path& file) {
  const json j = text::read_json(file);
  try {
    return config_from_json(j);
  } catch (const Error& e) {
    throw Error(file.string() + ": " + e.what());
  }
}

}  // namespace smsat
