#include "smsat/features.hpp"

#include "smsat/text.hpp"

#include <charconv>
#include <cmath>

namespace smsat::features {

nlohmann::json mel_params_to_json(const MelParams& p) {
  return {{"n_fft", p.n_fft}, {"win", p.win}, {"hop", p.hop}, {"n_mels", p.n_mels}, {"f_lo", p.f_lo}, {"f_hi", p.f_hi}};
}

MelParams mel_params_from_json(const nlohmann::json& j) {
  MelParams p;
  p.n_fft = j.value("n_fft", p.n_fft);
  p.win = j.value("win", p.win);
  p.hop = j.value("hop", p.hop);
  p.n_mels = j.value("n_mels", p.n_mels);
  p.f_lo = j.value("f_lo", p.f_lo);
  p.f_hi = j.value("f_hi", p.f_hi);
  return p;
}

TimeFreqGrid mel_spectrogram(const io::AudioClip& clip, const MelParams& p) {
  const auto fb = dsp::build_mel_filterbank(p.n_mels, p.n_fft, clip.rate, p.f_lo, std::min(p.f_hi, clip.rate / 2.0));
  return mel_spectrogram(clip, p, fb);
}

TimeFreqGrid mel_spectrogram(const io::AudioClip& clip, const MelParams& p, const dsp::MelFilterbank& fb) {
  if (fb.n_fft != p.n_fft || fb.n_mels() != p.n_mels)
    throw ShapeError("mel_spectrogram: filterbank (" + std::to_string(fb.n_mels()) + " mels, n_fft " +
                     std::to_string(fb.n_fft) + ") does not match params (" + std::to_string(p.n_mels) + ", " +
                     std::to_string(p.n_fft) + ")");
  if (clip.samples.size() < p.win)
    throw Error("mel_spectrogram: clip " + clip.id + " has " + std::to_string(clip.samples.size()) +
                " samples, shorter than one window (" + std::to_string(p.win) + ")");
  const dsp::Stft s = dsp::stft(clip.samples, p.win, p.hop, dsp::Window::Hann, p.n_fft);
  TimeFreqGrid g;
  g.domain = GridDomain::LogMel;
  g.values = ((fb.weights * s.power()).array() + kLogEps).log().matrix();
  g.row_axis.resize(fb.n_mels());
  for (Eigen::Index m = 0; m < fb.n_mels(); ++m) g.row_axis(m) = dsp::mel_to_hz(fb.centers_mel(m));
  g.frame_hop_s = static_cast<double>(p.hop) / clip.rate;
  g.window = "hann";
  return g;
}

Eigen::Matrix<double, kNumMfcc, 1> mfcc13_from_grid(const TimeFreqGrid& log_mel) {
  if (log_mel.bins() < kNumMfcc)
    throw ShapeError("mfcc13: need at least 13 mel bins, grid has " + std::to_string(log_mel.bins()));
  if (log_mel.frames() < 1) throw Error("mfcc13: grid has no frames");
  Eigen::Matrix<double, kNumMfcc, 1> acc = Eigen::Matrix<double, kNumMfcc, 1>::Zero();
  for (Eigen::Index t = 0; t < log_mel.frames(); ++t) acc += dsp::dct2(log_mel.values.col(t)).head<kNumMfcc>();
  return acc / static_cast<double>(log_mel.frames());
}

Eigen::Matrix<double, kNumMfcc, 1> mfcc13(const io::AudioClip& clip, const MelParams& p) {
  return mfcc13_from_grid(mel_spectrogram(clip, p));
}

double zcr(const Eigen::Ref<const Vector>& x) {
  if (x.size() < 2) throw Error("zcr: need at least 2 samples");
  Eigen::Index count = 0;
  for (Eigen::Index i = 1; i < x.size(); ++i)
    if (x(i) * x(i - 1) < 0.0) ++count;
  return static_cast<double>(count) / static_cast<double>(x.size() - 1);
}

double rms(const Eigen::Ref<const Vector>& x) {
  if (x.size() < 1) throw Error("rms: empty input");
  return std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
}

std::string_view wavelet_name(Wavelet w) { return w == Wavelet::Haar ? "haar" : "db4"; }

Wavelet parse_wavelet(std::string_view name) {
  if (name == "haar") return Wavelet::Haar;
  if (name == "db4" || name == "daubechies4") return Wavelet::Daubechies4;
  throw Error("unknown wavelet '" + std::string(name) + "'");
}

DwtLevel dwt_step(const Eigen::Ref<const Vector>& x, Wavelet w) {
  if (x.size() < 2) throw Error("dwt: need at least 2 samples");
  Vector s = x;
  if (s.size() % 2 != 0) {
    s.conservativeResize(s.size() + 1);
    s(s.size() - 1) = s(s.size() - 2);
  }
  const Eigen::Index half = s.size() / 2;
  DwtLevel out{Vector(half), Vector(half)};
  if (w == Wavelet::Haar) {
    const double r = 1.0 / std::sqrt(2.0);
    for (Eigen::Index k = 0; k < half; ++k) {
      out.approx(k) = (s(2 * k) + s(2 * k + 1)) * r;
      out.detail(k) = (s(2 * k) - s(2 * k + 1)) * r;
    }
    return out;
  }
  // Daubechies-4 with periodic wrap of the even-length signal.
  const double r3 = std::sqrt(3.0), d = 4.0 * std::sqrt(2.0);
  const double h[4] = {(1 + r3) / d, (3 + r3) / d, (3 - r3) / d, (1 - r3) / d};
  const double g[4] = {h[3], -h[2], h[1], -h[0]};
  const Eigen::Index n = s.size();
  for (Eigen::Index k = 0; k < half; ++k) {
    double a = 0.0, dd = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double v = s((2 * k + j) % n);
      a += h[j] * v;
      dd += g[j] * v;
    }
    out.approx(k) = a;
    out.detail(k) = dd;
  }
  return out;
}

Eigen::Matrix<double, 2 * kWaveletLevels, 1> wavelet_stats(const Eigen::Ref<const Vector>& x, Wavelet w) {
  if (x.size() < (1 << kWaveletLevels))
    throw Error("wavelet_stats: need at least 32 samples, got " + std::to_string(x.size()));
  Eigen::Matrix<double, 2 * kWaveletLevels, 1> out;
  Vector approx = x;
  for (int j = 0; j < kWaveletLevels; ++j) {
    DwtLevel lv = dwt_step(approx, w);
    const double mu = lv.detail.mean();
    out(2 * j) = mu;
    out(2 * j + 1) = std::sqrt((lv.detail.array() - mu).square().mean());
    approx = std::move(lv.approx);
  }
  return out;
}

FeatureVector25 extract_features(const io::AudioClip& clip, const FeatureOptions& opt) {
  FeatureVector25 f;
  f.head<kNumMfcc>() = mfcc13(clip, opt.mel);
  f(kNumMfcc) = zcr(clip.samples);
  f(kNumMfcc + 1) = rms(clip.samples);
  f.tail<2 * kWaveletLevels>() = wavelet_stats(clip.samples, opt.wavelet);
  return f;
}

const std::array<std::string, kFeatureDim>& feature_names() {
  static const std::array<std::string, kFeatureDim> names = [] {
    std::array<std::string, kFeatureDim> n;
    for (int i = 0; i < kNumMfcc; ++i) n[i] = "mfcc_" + std::to_string(i);
    n[kNumMfcc] = "zcr";
    n[kNumMfcc + 1] = "rms";
    for (int j = 0; j < kWaveletLevels; ++j) {
      n[kNumMfcc + 2 + 2 * j] = "w" + std::to_string(j + 1) + "_mu";
      n[kNumMfcc + 3 + 2 * j] = "w" + std::to_string(j + 1) + "_sd";
    }
    return n;
  }();
  return names;
}

std::string features_to_csv(const std::vector<FeatureRow>& rows) {
  std::vector<std::string> header = {"id", "label"};
  for (const auto& n : feature_names()) header.push_back(n);
  text::CsvWriter csv(header);
  for (const auto& r : rows) {
    std::vector<std::string> cells = {r.id, std::string(label_name(r.label))};
    for (int i = 0; i < kFeatureDim; ++i) cells.push_back(text::fmt(r.x(i)));
    csv.row(cells);
  }
  return csv.str();
}

std::vector<FeatureRow> read_features_csv(const std::filesystem::path& file) {
  const auto t = text::read_csv(file);
  const int id_col = t.column("id"), label_col = t.column("label");
  if (id_col < 0 || label_col < 0) throw Error(file.string() + ": missing id/label columns");
  std::array<int, kFeatureDim> cols{};
  for (int i = 0; i < kFeatureDim; ++i) {
    cols[i] = t.column(feature_names()[i]);
    if (cols[i] < 0) throw ShapeError(file.string() + ": missing feature column " + feature_names()[i] + " (expected 25 features)");
  }
  std::vector<FeatureRow> rows;
  for (const auto& r : t.rows) {
    FeatureRow fr;
    fr.id = r[id_col];
    auto label = parse_label(r[label_col]);
    if (!label) throw Error(file.string() + ": unknown label '" + r[label_col] + "'");
    fr.label = *label;
    for (int i = 0; i < kFeatureDim; ++i) {
      const std::string& cell = r[cols[i]];
      double v = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc()) throw Error(file.string() + ": bad number '" + cell + "' for " + fr.id);
      fr.x(i) = v;
    }
    rows.push_back(std::move(fr));
  }
  return rows;
}

}  // namespace smsat::features
