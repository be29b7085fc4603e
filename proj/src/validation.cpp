#include "smsat/validation.hpp"

#include "smsat/dsp.hpp"
#include "smsat/parallel.hpp"
#include "smsat/svg.hpp"
#include "smsat/text.hpp"

#include <cmath>
#include <numbers>

namespace smsat::validation {

std::array<TheoreticalModel, kNumClasses> default_models() {
  std::array<TheoreticalModel, kNumClasses> m;
  m[label_index(ClassLabel::SpiritualMeditation)] = {25.0, 0.0};
  m[label_index(ClassLabel::Music)] = {20.0, 0.0};
  m[label_index(ClassLabel::NormalSilence)] = {30.0, 0.0};
  return m;
}

namespace {

Vector carrier(Eigen::Index n, double rate, double f_c, double phase) {
  Vector c(n);
  for (Eigen::Index i = 0; i < n; ++i)
    c(i) = std::cos(2.0 * std::numbers::pi * f_c * static_cast<double>(i) / rate + phase);
  return c;
}

void check_model(const io::AudioClip& clip, double f_c) {
  if (!(f_c > 0.0) || f_c >= clip.rate / 2.0)
    throw Error("theoretical model: f_c=" + text::fmt(f_c) + " Hz must lie in (0, rate/2) for clip " + clip.id);
}

}  // namespace

Vector reconstruct_theoretical(const io::AudioClip& clip, const TheoreticalModel& model) {
  check_model(clip, model.f_c);
  const Vector env = dsp::analytic_envelope(clip.samples);
  return env.cwiseProduct(carrier(clip.samples.size(), clip.rate, model.f_c, model.phase));
}

double search_phase(const io::AudioClip& clip, double f_c, int grid) {
  check_model(clip, f_c);
  const Vector env = dsp::analytic_envelope(clip.samples);
  double best_phase = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (int g = 0; g < grid; ++g) {
    const double phase = 2.0 * std::numbers::pi * g / grid;
    const double corr = clip.samples.dot(env.cwiseProduct(carrier(clip.samples.size(), clip.rate, f_c, phase)));
    if (corr > best) {
      best = corr;
      best_phase = phase;
    }
  }
  return best_phase;
}

EnvelopeStats envelope_stats(const io::AudioClip& clip) {
  const Eigen::Index n = clip.samples.size();
  if (n < 1) throw Error("envelope_stats: empty clip");
  EnvelopeStats s;
  s.energy = clip.samples.squaredNorm();
  if (n < 8) {
    s.env_mean = clip.samples.cwiseAbs().mean();
    s.env_std = std::sqrt((clip.samples.cwiseAbs().array() - s.env_mean).square().mean());
    return s;
  }
  const Vector env = dsp::analytic_envelope(clip.samples);
  const auto trim = static_cast<Eigen::Index>(std::floor(kEdgeTrim * static_cast<double>(n)));
  const auto interior = env.segment(trim, n - 2 * trim);
  s.env_mean = interior.mean();
  s.env_std = std::sqrt((interior.array() - s.env_mean).square().mean());
  return s;
}

ValidationRecord validate_clip(const io::AudioClip& clip, const ValidateOptions& opt) {
  TheoreticalModel model = opt.models[label_index(clip.label)];
  if (opt.phase_search) model.phase = search_phase(clip, model.f_c);
  ValidationRecord r;
  r.id = clip.id;
  r.label = clip.label;
  r.phase = model.phase;
  r.rmse = rmse(clip.samples, reconstruct_theoretical(clip, model));
  const EnvelopeStats s = envelope_stats(clip);
  r.env_mean = s.env_mean;
  r.env_std = s.env_std;
  r.energy = s.energy;
  r.peak_hz = dsp::peak_frequency(clip.samples, clip.rate);
  return r;
}

ValidationReport validate_clips(const std::vector<io::AudioClip>& clips, const ValidateOptions& opt) {
  if (clips.empty()) throw Error("validate: empty corpus");
  ValidationReport rep;
  rep.per_clip = parallel_map<ValidationRecord>(clips.size(), opt.jobs, [&](std::size_t i) {
    try {
      return validate_clip(clips[i], opt);
    } catch (const Error& e) {
      throw Error("clip " + clips[i].id + ": " + e.what());
    }
  });

  // Common spectrum grid for class means: pad every clip to the longest.
  Eigen::Index max_len = 0;
  int rate = clips.front().rate;
  for (const auto& c : clips) max_len = std::max(max_len, c.samples.size());
  const Eigen::Index n_fft = dsp::next_pow2(max_len);
  const Eigen::Index bins = n_fft / 2 + 1;

  std::array<std::vector<std::size_t>, kNumClasses> members;
  for (std::size_t i = 0; i < clips.size(); ++i) members[label_index(clips[i].label)].push_back(i);

  for (auto label : kAllLabels) {
    const auto& idx = members[label_index(label)];
    if (idx.empty()) {
      rep.warnings.push_back("class " + std::string(label_name(label)) + " has no clips");
      continue;
    }
    ClassSummary cs;
    cs.n = static_cast<int>(idx.size());
    cs.mean_spectrum = Vector::Zero(bins);
    cs.spectrum_bin_hz = static_cast<double>(rate) / static_cast<double>(n_fft);
    for (std::size_t i : idx) {
      const auto& r = rep.per_clip[i];
      cs.rmse_mean += r.rmse;
      cs.env_mean += r.env_mean;
      cs.env_std += r.env_std;
      cs.energy_mean += r.energy;
      Vector padded = Vector::Zero(n_fft);
      padded.head(clips[i].samples.size()) = clips[i].samples;
      const Vector mag = dsp::magnitude(dsp::fft(padded, rate));
      cs.mean_spectrum += mag.head(bins) * (2.0 / static_cast<double>(clips[i].samples.size()));
    }
    const double k = static_cast<double>(cs.n);
    cs.rmse_mean /= k;
    cs.env_mean /= k;
    cs.env_std /= k;
    cs.energy_mean /= k;
    cs.mean_spectrum /= k;
    Eigen::Index peak = 0;
    cs.mean_spectrum.maxCoeff(&peak);
    cs.peak_hz = static_cast<double>(peak) * cs.spectrum_bin_hz;
    rep.per_class[label_index(label)] = std::move(cs);
  }
  return rep;
}

ValidationReport validate_corpus(const io::CorpusManifest& manifest, const ValidateOptions& opt) {
  if (manifest.entries.empty()) throw Error("validate: empty manifest");
  auto clips = parallel_map<io::AudioClip>(manifest.entries.size(), opt.jobs, [&](std::size_t i) {
    return io::load_entry(manifest, manifest.entries[i]);
  });
  return validate_clips(clips, opt);
}

nlohmann::json report_to_json(const ValidationReport& r) {
  nlohmann::json clips = nlohmann::json::array();
  for (const auto& c : r.per_clip)
    clips.push_back({{"id", c.id},
                     {"label", std::string(label_name(c.label))},
                     {"rmse", c.rmse},
                     {"env_mean", c.env_mean},
                     {"env_std", c.env_std},
                     {"energy", c.energy},
                     {"peak_hz", c.peak_hz},
                     {"phase", c.phase}});
  nlohmann::json classes = nlohmann::json::object();
  for (auto l : kAllLabels) {
    const auto& cs = r.per_class[label_index(l)];
    if (!cs) continue;
    classes[std::string(label_name(l))] = {{"n", cs->n},
                                           {"rmse_mean", cs->rmse_mean},
                                           {"env_mean", cs->env_mean},
                                           {"env_std", cs->env_std},
                                           {"energy_mean", cs->energy_mean},
                                           {"peak_hz", cs->peak_hz}};
  }
  return {{"per_clip", clips}, {"per_class", classes}, {"warnings", r.warnings}};
}

std::string report_to_csv(const ValidationReport& r) {
  text::CsvWriter csv({"id", "label", "rmse", "env_mean", "env_std", "energy", "peak_hz", "phase"});
  for (const auto& c : r.per_clip)
    csv.row({c.id, std::string(label_name(c.label)), text::fmt(c.rmse), text::fmt(c.env_mean), text::fmt(c.env_std),
             text::fmt(c.energy), text::fmt(c.peak_hz), text::fmt(c.phase)});
  return csv.str();
}

std::string overlay_svg(const io::AudioClip& clip, const TheoreticalModel& model, double seconds, double max_hz) {
  const Vector theo = reconstruct_theoretical(clip, model);
  const auto n = std::min<Eigen::Index>(clip.samples.size(), static_cast<Eigen::Index>(seconds * clip.rate));
  // Decimate the time trace to at most ~800 points.
  const Eigen::Index stride = std::max<Eigen::Index>(1, n / 800);
  svg::Series raw{"raw", {}, {}}, model_series{"theoretical", {}, {}};
  for (Eigen::Index i = 0; i < n; i += stride) {
    const double t = static_cast<double>(i) / clip.rate;
    raw.x.push_back(t);
    raw.y.push_back(clip.samples(i));
    model_series.x.push_back(t);
    model_series.y.push_back(theo(i));
  }
  const std::string time_chart = svg::line_chart(
      {raw, model_series}, {"Time domain: " + clip.id + " (f_c " + text::fmt(model.f_c) + " Hz)", "time (s)", "amplitude"});

  auto spectrum = [&](const Vector& x, const std::string& name) {
    const auto spec = dsp::fft(x, clip.rate);
    const Vector mag = dsp::magnitude(spec);
    svg::Series s{name, {}, {}};
    for (Eigen::Index k = 0; k <= spec.n_fft / 2 && k * spec.bin_hz <= max_hz; ++k) {
      s.x.push_back(k * spec.bin_hz);
      s.y.push_back(mag(k) * 2.0 / static_cast<double>(x.size()));
    }
    return s;
  };
  const std::string freq_chart = svg::line_chart({spectrum(clip.samples, "raw |X(f)|"), spectrum(theo, "theoretical |X(f)|")},
                                                 {"Magnitude spectrum", "frequency (Hz)", "|X(f)|"});
  return svg::stack({time_chart, freq_chart});
}

}  // namespace smsat::validation
