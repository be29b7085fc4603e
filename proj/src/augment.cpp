#include "smsat/augment.hpp"

#include "smsat/dsp.hpp"
#include "smsat/rng.hpp"
#include "smsat/text.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace smsat::augment {

void AugmentConfig::validate() const {
  if (!(stretch_lo > 0.0 && stretch_lo <= stretch_hi))
    throw Error("augment: need 0 < stretch_lo <= stretch_hi, got (" + text::fmt(stretch_lo) + ", " +
                text::fmt(stretch_hi) + ")");
  if (pitch_k < 0.0) throw Error("augment: pitch_k must be >= 0");
  if (freq_mask_max < 0 || time_mask_max < 0) throw Error("augment: mask maxima must be >= 0");
  if (variants_per_clip < 1) throw Error("augment: variants_per_clip must be >= 1");
  if (noise_sigma_rel < 0.0 || (noise_sigma_abs && *noise_sigma_abs < 0.0)) throw Error("augment: sigma must be >= 0");
}

io::AudioClip add_gaussian_noise(const io::AudioClip& clip, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw Error("add_gaussian_noise: sigma must be >= 0");
  io::AudioClip out = clip;
  if (sigma == 0.0) return out;
  CounterRng rng(seed);
  for (Eigen::Index i = 0; i < out.samples.size(); ++i) out.samples(i) += sigma * rng.normal();
  return out;
}

namespace {

double wrap_phase(double p) { return p - 2.0 * std::numbers::pi * std::round(p / (2.0 * std::numbers::pi)); }

}  // namespace

io::AudioClip time_stretch(const io::AudioClip& clip, double r) {
  if (!(r > 0.0)) throw Error("time_stretch: rate must be positive");
  const Eigen::Index n = clip.samples.size();
  if (n < kVocoderWindow)
    throw Error("time_stretch: clip " + clip.id + " has " + std::to_string(n) + " samples, shorter than one window (" +
                std::to_string(kVocoderWindow) + ")");
  const Eigen::Index win = kVocoderWindow, hop = kVocoderHop, pad = win / 2;
  const Eigen::Index bins = win / 2 + 1;

  Eigen::Index padded_len = n + 2 * pad;
  if ((padded_len - win) % hop != 0) padded_len += hop - (padded_len - win) % hop;
  Vector xp = Vector::Zero(padded_len);
  xp.segment(pad, n) = clip.samples;

  const Vector w = dsp::make_window(dsp::Window::Hann, win);
  const Eigen::Index frames = 1 + (padded_len - win) / hop;
  Eigen::MatrixXcd spec(bins, frames);
  for (Eigen::Index t = 0; t < frames; ++t)
    spec.col(t) = dsp::rfft(xp.segment(t * hop, win).cwiseProduct(w));

  Vector omega(bins);
  for (Eigen::Index k = 0; k < bins; ++k)
    omega(k) = 2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(hop) / static_cast<double>(win);

  std::vector<double> steps;
  for (double t = 0.0; t < static_cast<double>(frames - 1); t += r) steps.push_back(t);

  Vector phase_acc = spec.col(0).array().arg();
  const auto out_frames = static_cast<Eigen::Index>(steps.size());
  const Eigen::Index y_len = hop * (out_frames - 1) + win;
  Vector y = Vector::Zero(y_len);
  Vector wsum = Vector::Zero(y_len);
  dsp::ComplexVector frame(bins);
  for (Eigen::Index s = 0; s < out_frames; ++s) {
    const double t = steps[static_cast<std::size_t>(s)];
    const auto i = static_cast<Eigen::Index>(std::floor(t));
    const double alpha = t - static_cast<double>(i);
    for (Eigen::Index k = 0; k < bins; ++k) {
      const std::complex<double> a = spec(k, i), b = spec(k, i + 1);
      const double mag = (1.0 - alpha) * std::abs(a) + alpha * std::abs(b);
      frame(k) = std::polar(mag, phase_acc(k));
      const double dphi = wrap_phase(std::arg(b) - std::arg(a) - omega(k));
      phase_acc(k) += omega(k) + dphi;
    }
    const Vector seg = dsp::irfft(frame, win).cwiseProduct(w);
    y.segment(s * hop, win) += seg;
    wsum.segment(s * hop, win) += w.cwiseAbs2();
  }
  for (Eigen::Index i = 0; i < y_len; ++i)
    if (wsum(i) > 1e-8) y(i) /= wsum(i);

  const auto out_len = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(static_cast<double>(n) / r)));
  io::AudioClip out = clip;
  out.samples = Vector::Zero(out_len);
  const Eigen::Index avail = std::min(out_len, std::max<Eigen::Index>(0, y_len - pad));
  out.samples.head(avail) = y.segment(pad, avail);
  return out;
}

io::AudioClip pitch_shift(const io::AudioClip& clip, double semitones) {
  const double factor = std::pow(2.0, semitones / 12.0);
  // Lengthen by `factor` keeping pitch, then play back `factor` times faster.
  io::AudioClip stretched = time_stretch(clip, 1.0 / factor);
  io::AudioClip out = clip;
  out.samples = io::resample_samples(stretched.samples, clip.rate * factor, clip.rate, clip.samples.size());
  return out;
}

features::TimeFreqGrid spec_mask(const features::TimeFreqGrid& grid, int f_max, int t_max, std::uint64_t seed) {
  if (f_max < 0 || f_max > grid.bins()) throw Error("spec_mask: f_max out of range");
  if (t_max < 0 || t_max > grid.frames()) throw Error("spec_mask: t_max out of range");
  features::TimeFreqGrid out = grid;
  if (grid.values.size() == 0) return out;
  const double floor_value = grid.values.minCoeff();
  CounterRng rng(seed);
  const auto f_width = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(f_max) + 1));
  const auto f_start = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(grid.bins() - f_width) + 1));
  const auto t_width = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(t_max) + 1));
  const auto t_start = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(grid.frames() - t_width) + 1));
  out.values.middleRows(f_start, f_width).setConstant(floor_value);
  out.values.middleCols(t_start, t_width).setConstant(floor_value);
  return out;
}

io::AudioClip random_variant(const io::AudioClip& clip, const AugmentConfig& cfg, std::uint64_t key) {
  CounterRng rng(key);
  const double r = rng.uniform(cfg.stretch_lo, cfg.stretch_hi);
  const double s = rng.uniform(-cfg.pitch_k, cfg.pitch_k);
  const std::uint64_t noise_seed = rng.next_u64();
  const double peak = clip.samples.size() ? clip.samples.cwiseAbs().maxCoeff() : 0.0;
  const double sigma = cfg.noise_sigma_abs ? *cfg.noise_sigma_abs : cfg.noise_sigma_rel * peak;
  io::AudioClip v = add_gaussian_noise(clip, sigma, noise_seed);
  v = time_stretch(v, r);
  v = pitch_shift(v, s);
  return v;
}

std::vector<io::AudioClip> augment_pipeline(const io::AudioClip& clip, const AugmentConfig& cfg) {
  cfg.validate();
  const CounterRng root(cfg.seed);
  std::vector<io::AudioClip> out;
  out.reserve(static_cast<std::size_t>(cfg.variants_per_clip));
  for (int k = 0; k < cfg.variants_per_clip; ++k) {
    const std::uint64_t key = root.derive({CounterRng::hash_string(clip.id), static_cast<std::uint64_t>(k)}).key();
    io::AudioClip v = random_variant(clip, cfg, key);
    v.id = clip.id + ".aug" + std::to_string(k + 1);
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace smsat::augment
