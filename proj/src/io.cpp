#include "smsat/io.hpp"

#include "smsat/rng.hpp"
#include "smsat/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace smsat::io {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>((v >> 8) & 0xFF));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

AudioClip load_wav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw Error(path.string() + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* hdr = buf.data() + pos;
    std::uint32_t len = read_u32(hdr + 4);
    std::size_t body = pos + 8;
    std::size_t avail = std::min<std::size_t>(len, buf.size() - body);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (avail < 16) throw Error(path.string() + ": truncated fmt chunk");
      format = read_u16(buf.data() + body);
      channels = read_u16(buf.data() + body + 2);
      rate = read_u32(buf.data() + body + 4);
      bits = read_u16(buf.data() + body + 14);
      if (format == kFormatExtensible && avail >= 26) format = read_u16(buf.data() + body + 24);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = buf.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (format == 0 || data == nullptr) throw Error(path.string() + ": missing fmt or data chunk");
  if (channels < 1 || channels > 2)
    throw Error(path.string() + ": unsupported channel count " + std::to_string(channels));
  if (rate == 0) throw Error(path.string() + ": zero sample rate");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32)
    throw Error(path.string() + ": unsupported encoding (format " + std::to_string(format) + ", " +
                std::to_string(bits) + " bits)");

  const std::size_t bytes = bits / 8;
  const std::size_t frames = data_len / (bytes * channels);
  if (frames == 0) throw Error(path.string() + ": zero-length audio");

  AudioClip clip;
  clip.rate = static_cast<int>(rate);
  clip.id = path.stem().string();
  clip.samples.resize(static_cast<Eigen::Index>(frames));
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (i * channels + c) * bytes;
      if (pcm16) {
        acc += static_cast<double>(static_cast<std::int16_t>(read_u16(p))) / 32768.0;
      } else {
        std::uint32_t u = read_u32(p);
        float f;
        std::memcpy(&f, &u, sizeof f);
        acc += static_cast<double>(f);
      }
    }
    clip.samples(static_cast<Eigen::Index>(i)) = acc / static_cast<double>(channels);
  }
  if (!clip.samples.allFinite()) throw Error(path.string() + ": non-finite samples");
  return clip;
}

void save_wav(const AudioClip& clip, const fs::path& path) {
  if (!clip.samples.allFinite()) throw Error("save_wav: non-finite samples in clip " + clip.id);
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.rate));
  put_u32(out, static_cast<std::uint32_t>(clip.rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (Eigen::Index i = 0; i < clip.samples.size(); ++i) {
    const double v = std::clamp(clip.samples(i), -1.0, 1.0);
    const long q = std::clamp(std::lround(v * 32768.0), -32768L, 32767L);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  text::write_text(path, out);
}

ClassDirMap default_class_dirs() { return {"Spiritual", "Music", "Normal"}; }

void CorpusManifest::recount() {
  counts.fill(0);
  for (const auto& e : entries) ++counts[label_index(e.label)];
}

CorpusManifest build_manifest(const fs::path& root, const ClassDirMap& dirs, std::vector<std::string>* warnings) {
  if (!fs::is_directory(root)) throw Error("corpus root does not exist: " + root.string());
  for (const auto& d : dirs)
    if (!fs::is_directory(root / d)) throw Error("class directory missing: " + (root / d).string());

  CorpusManifest m;
  m.base = root;
  std::vector<fs::directory_entry> subdirs;
  for (const auto& de : fs::directory_iterator(root))
    if (de.is_directory()) subdirs.push_back(de);

  for (const auto& de : subdirs) {
    const std::string name = de.path().filename().string();
    auto it = std::find(dirs.begin(), dirs.end(), name);
    if (it == dirs.end()) {
      if (warnings) warnings->push_back("skipping unmapped directory " + de.path().string());
      continue;
    }
    const ClassLabel label = label_from_index(static_cast<int>(it - dirs.begin()));
    for (const auto& f : fs::directory_iterator(de.path())) {
      if (!f.is_regular_file()) continue;
      std::string ext = f.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext != ".wav") continue;
      AudioClip clip = load_wav(f.path());
      ManifestEntry e;
      e.path = fs::relative(f.path(), root).generic_string();
      e.label = label;
      e.duration_s = clip.duration_s();
      e.rate = clip.rate;
      m.entries.push_back(std::move(e));
    }
  }
  if (m.entries.empty()) throw Error("empty corpus under " + root.string());
  std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  m.recount();
  return m;
}

nlohmann::json manifest_to_json(const CorpusManifest& m, const fs::path& relative_to) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    fs::path abs = fs::weakly_canonical(m.resolve(e));
    fs::path rel = fs::relative(abs, fs::weakly_canonical(relative_to));
    entries.push_back({{"path", rel.generic_string()},
                       {"label", std::string(label_name(e.label))},
                       {"duration_s", e.duration_s},
                       {"rate", e.rate}});
  }
  nlohmann::json counts = nlohmann::json::object();
  for (auto l : kAllLabels) counts[std::string(label_name(l))] = m.counts[label_index(l)];
  return {{"entries", entries}, {"counts", counts}};
}

CorpusManifest manifest_from_json(const nlohmann::json& j, const fs::path& base) {
  CorpusManifest m;
  m.base = base;
  try {
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      e.path = je.at("path").get<std::string>();
      auto label = parse_label(je.at("label").get<std::string>());
      if (!label) throw Error("manifest: unknown label " + je.at("label").dump());
      e.label = *label;
      e.duration_s = je.at("duration_s").get<double>();
      e.rate = je.at("rate").get<int>();
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(std::string("manifest: ") + ex.what());
  }
  m.recount();
  return m;
}

void save_manifest(const CorpusManifest& m, const fs::path& file) {
  fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
  fs::create_directories(dir);
  text::write_json(file, manifest_to_json(m, dir));
}

CorpusManifest load_manifest(const fs::path& file) {
  fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
  return manifest_from_json(text::read_json(file), dir);
}

AudioClip load_entry(const CorpusManifest& m, const ManifestEntry& e, int target_rate) {
  AudioClip clip = load_wav(m.resolve(e));
  clip.label = e.label;
  fs::path p(e.path);
  clip.id = (p.parent_path().filename() / p.stem()).generic_string();
  if (clip.rate != target_rate) clip = resample(clip, target_rate);
  return clip;
}

namespace {

constexpr int kHalfTaps = 32;  // 64-tap kernel
constexpr double kKaiserBeta = 8.0;

double kaiser_exact(double t) {
  const double arg = kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - t * t));
  return std::cyl_bessel_i(0.0, arg) / std::cyl_bessel_i(0.0, kKaiserBeta);
}

// Kaiser window on t in [-1, 1], tabulated over |t| with linear interpolation.
double kaiser(double t) {
  constexpr int kTable = 8192;
  static const std::vector<double> table = [] {
    std::vector<double> v(kTable + 1);
    for (int i = 0; i <= kTable; ++i) v[i] = kaiser_exact(static_cast<double>(i) / kTable);
    return v;
  }();
  const double x = std::min(std::abs(t), 1.0) * kTable;
  const int i = std::min(static_cast<int>(x), kTable - 1);
  const double frac = x - i;
  return table[i] + frac * (table[i + 1] - table[i]);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

Vector resample_samples(const Eigen::Ref<const Vector>& x, double in_rate, double out_rate, Eigen::Index out_len) {
  if (!(in_rate > 0.0 && out_rate > 0.0)) throw Error("resample: rates must be positive");
  const Eigen::Index n = x.size();
  Vector y = Vector::Zero(out_len);
  if (n == 0) return y;
  const double step = in_rate / out_rate;             // input samples per output sample
  const double cutoff = 0.5 * std::min(1.0, out_rate / in_rate);  // cycles per input sample
  for (Eigen::Index j = 0; j < out_len; ++j) {
    const double t = static_cast<double>(j) * step;
    const auto base = static_cast<Eigen::Index>(std::floor(t));
    double acc = 0.0;
    for (Eigen::Index i = base - kHalfTaps + 1; i <= base + kHalfTaps; ++i) {
      if (i < 0 || i >= n) continue;
      const double d = t - static_cast<double>(i);
      if (std::abs(d) >= kHalfTaps) continue;
      acc += x(i) * 2.0 * cutoff * sinc(2.0 * cutoff * d) * kaiser(d / kHalfTaps);
    }
    y(j) = acc;
  }
  return y;
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw Error("resample: target rate must be positive");
  if (target_rate == clip.rate) return clip;
  AudioClip out = clip;
  const auto len = static_cast<Eigen::Index>(
      std::llround(static_cast<double>(clip.samples.size()) * target_rate / static_cast<double>(clip.rate)));
  out.samples = resample_samples(clip.samples, clip.rate, target_rate, std::max<Eigen::Index>(len, 1));
  out.rate = target_rate;
  return out;
}

std::vector<SynthClip> synth_clips(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.n_per_class < 1) throw Error("synth: n_per_class must be >= 1");
  if (!(cfg.duration_s > 0.0) || cfg.rate <= 0) throw Error("synth: duration and rate must be positive");
  const auto n = static_cast<Eigen::Index>(std::llround(cfg.duration_s * cfg.rate));
  const CounterRng root(seed);
  std::vector<SynthClip> out;
  for (auto label : kAllLabels) {
    const int li = label_index(label);
    const double level = cfg.level[li];
    const double fc = cfg.tone_hz[li];
    for (int k = 0; k < cfg.n_per_class; ++k) {
      CounterRng rng = root.derive({static_cast<std::uint64_t>(li), static_cast<std::uint64_t>(k)});
      const int n_sines = 1 + static_cast<int>(rng.below(3));
      std::array<double, 3> amp{}, freq{}, phase{};
      for (int s = 0; s < n_sines; ++s) {
        amp[s] = 0.5 * level * rng.uniform() / n_sines;
        freq[s] = rng.uniform(0.1, 2.0);
        phase[s] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      }
      SynthClip sc;
      sc.envelope.resize(n);
      sc.clip.samples.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / cfg.rate;
        double a = level;
        for (int s = 0; s < n_sines; ++s) a += amp[s] * std::sin(2.0 * std::numbers::pi * freq[s] * t + phase[s]);
        sc.envelope(i) = a;
        sc.clip.samples(i) = a * std::cos(2.0 * std::numbers::pi * fc * t);
      }
      double sigma = cfg.noise_sigma;
      if (sigma <= 0.0 && std::isfinite(cfg.snr_db)) {
        const double rms = std::sqrt(sc.clip.samples.squaredNorm() / static_cast<double>(n));
        sigma = rms * std::pow(10.0, -cfg.snr_db / 20.0);
      }
      if (sigma > 0.0) {
        CounterRng noise = rng.derive("noise");
        for (Eigen::Index i = 0; i < n; ++i) sc.clip.samples(i) += sigma * noise.normal();
      }
      sc.clip.rate = cfg.rate;
      sc.clip.label = label;
      char id[32];
      std::snprintf(id, sizeof id, "%s_%03d", std::string(label_code(label)).c_str(), k);
      sc.clip.id = id;
      out.push_back(std::move(sc));
    }
  }
  return out;
}

CorpusManifest synth_corpus(const SynthConfig& cfg, std::uint64_t seed, const fs::path& root, const ClassDirMap& dirs) {
  CorpusManifest m;
  m.base = root;
  for (const auto& sc : synth_clips(cfg, seed)) {
    const std::string rel = dirs[label_index(sc.clip.label)] + "/" + sc.clip.id + ".wav";
    save_wav(sc.clip, root / rel);
    m.entries.push_back({rel, sc.clip.label, sc.clip.duration_s(), sc.clip.rate});
  }
  std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  m.recount();
  return m;
}

}  // namespace smsat::io
