#include "smsat/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <numbers>
#include <string>

namespace smsat::dsp {

namespace {

void require_finite(const Eigen::Ref<const Vector>& x, const char* op) {
  if (!x.allFinite()) throw Error(std::string(op) + ": non-finite input");
}

// A length-1 transform is the identity; the backend does not handle it.
ComplexVector complex_fwd(const ComplexVector& in) {
  if (in.size() == 1) return in;
  Eigen::FFT<double> engine;
  ComplexVector out;
  engine.fwd(out, in);
  return out;
}

ComplexVector complex_inv(const ComplexVector& in) {
  if (in.size() == 1) return in;
  Eigen::FFT<double> engine;
  ComplexVector out;
  engine.inv(out, in);
  return out;
}

}  // namespace

Eigen::Index next_pow2(Eigen::Index n) {
  Eigen::Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

ComplexVector dft_exact(const Eigen::Ref<const Vector>& x) {
  return complex_fwd(x.cast<std::complex<double>>());
}

ComplexSpectrum fft(const Eigen::Ref<const Vector>& x, double rate) {
  if (x.size() < 1) throw Error("fft: empty input");
  require_finite(x, "fft");
  const Eigen::Index n = next_pow2(x.size());
  ComplexVector padded = ComplexVector::Zero(n);
  padded.head(x.size()) = x.cast<std::complex<double>>();
  ComplexVector out = complex_fwd(padded);
  ComplexSpectrum spec;
  spec.re = out.real();
  spec.im = out.imag();
  spec.n_fft = n;
  spec.input_length = x.size();
  spec.bin_hz = rate / static_cast<double>(n);
  return spec;
}

Vector magnitude(const ComplexSpectrum& spec) {
  if (spec.re.size() != spec.im.size())
    throw ShapeError("magnitude: re/im length mismatch " + std::to_string(spec.re.size()) + " vs " +
                     std::to_string(spec.im.size()));
  return (spec.re.array().square() + spec.im.array().square()).sqrt();
}

Vector ifft_real(const ComplexSpectrum& spec) {
  ComplexVector full(spec.re.size());
  full.real() = spec.re;
  full.imag() = spec.im;
  return complex_inv(full).real();
}

ComplexVector rfft(const Eigen::Ref<const Vector>& frame) {
  ComplexVector full = dft_exact(frame);
  return full.head(frame.size() / 2 + 1);
}

Vector irfft(const Eigen::Ref<const ComplexVector>& half, Eigen::Index n) {
  if (half.size() != n / 2 + 1)
    throw ShapeError("irfft: expected " + std::to_string(n / 2 + 1) + " bins, got " + std::to_string(half.size()));
  ComplexVector full(n);
  full.head(half.size()) = half;
  for (Eigen::Index k = half.size(); k < n; ++k) full(k) = std::conj(half(n - k));
  // DC and (even n) Nyquist of a real signal are real.
  full(0) = full(0).real();
  if (n % 2 == 0) full(n / 2) = full(n / 2).real();
  return complex_inv(full).real();
}

Vector dct2(const Eigen::Ref<const Vector>& x) {
  const Eigen::Index m = x.size();
  if (m < 1) throw Error("dct2: empty input");
  Vector c(m);
  const double step = std::numbers::pi / static_cast<double>(m);
  for (Eigen::Index n = 0; n < m; ++n) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) acc += x(i) * std::cos(step * (static_cast<double>(i) + 0.5) * static_cast<double>(n));
    c(n) = acc;
  }
  return c;
}

ComplexVector analytic_signal(const Eigen::Ref<const Vector>& x) {
  require_finite(x, "analytic_signal");
  const Eigen::Index n = x.size();
  ComplexVector spec = dft_exact(x);
  // Keep DC (and Nyquist for even n), double positive, zero negative bins.
  const Eigen::Index half = (n % 2 == 0) ? n / 2 : (n + 1) / 2;
  for (Eigen::Index k = 1; k < half; ++k) spec(k) *= 2.0;
  for (Eigen::Index k = (n % 2 == 0) ? half + 1 : half; k < n; ++k) spec(k) = 0.0;
  return complex_inv(spec);
}

Vector analytic_envelope(const Eigen::Ref<const Vector>& x) {
  if (x.size() < 8) throw Error("analytic_envelope: need at least 8 samples, got " + std::to_string(x.size()));
  ComplexVector a = analytic_signal(x);
  // Real part of the analytic signal is x itself up to round-off; use x.
  return (x.array().square() + a.imag().array().square()).sqrt();
}

std::string_view window_name(Window w) { return w == Window::Hann ? "hann" : "rect"; }

Window parse_window(std::string_view name) {
  if (name == "hann") return Window::Hann;
  if (name == "rect" || name == "rectangular") return Window::Rect;
  throw Error("unknown window '" + std::string(name) + "'");
}

Vector make_window(Window w, Eigen::Index n) {
  if (w == Window::Rect) return Vector::Ones(n);
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i)
    out(i) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return out;
}

Eigen::Index stft_frame_count(Eigen::Index n, Eigen::Index win_len, Eigen::Index hop) {
  if (win_len < 1 || hop < 1) throw Error("stft: win_len and hop must be positive");
  if (n < win_len)
    throw Error("stft: signal of " + std::to_string(n) + " samples is shorter than one window (" +
                std::to_string(win_len) + ")");
  return 1 + (n - win_len) / hop;
}

Stft stft(const Eigen::Ref<const Vector>& x, Eigen::Index win_len, Eigen::Index hop, Window window,
          Eigen::Index n_fft) {
  const Eigen::Index frames = stft_frame_count(x.size(), win_len, hop);
  if (n_fft == 0) n_fft = next_pow2(win_len);
  if (n_fft < win_len) throw Error("stft: n_fft smaller than window");
  require_finite(x, "stft");

  const Vector w = make_window(window, win_len);
  const Eigen::Index bins = n_fft / 2 + 1;
  Stft out;
  out.re.resize(bins, frames);
  out.im.resize(bins, frames);
  out.win_len = win_len;
  out.hop = hop;
  out.n_fft = n_fft;
  out.window = window;

  Eigen::FFT<double> engine;
  ComplexVector buf(n_fft);
  ComplexVector spec;
  for (Eigen::Index t = 0; t < frames; ++t) {
    buf.setZero();
    buf.head(win_len) = (x.segment(t * hop, win_len).array() * w.array()).matrix().cast<std::complex<double>>();
    engine.fwd(spec, buf);
    out.re.col(t) = spec.head(bins).real();
    out.im.col(t) = spec.head(bins).imag();
  }
  return out;
}

MelFilterbank build_mel_filterbank(Eigen::Index n_mels, Eigen::Index n_fft, double rate, double f_lo, double f_hi) {
  if (n_mels < 2) throw Error("mel filterbank: n_mels must be >= 2");
  if (!(f_lo >= 0.0 && f_lo < f_hi && f_hi <= rate / 2.0))
    throw Error("mel filterbank: need 0 <= f_lo < f_hi <= rate/2");
  const Eigen::Index bins = n_fft / 2 + 1;
  const double mel_lo = mel_scale(f_lo);
  const double mel_hi = mel_scale(f_hi);

  MelFilterbank fb;
  fb.n_fft = n_fft;
  fb.rate = rate;
  fb.edges_hz.resize(n_mels + 2);
  fb.centers_mel.resize(n_mels);
  const double step = (mel_hi - mel_lo) / static_cast<double>(n_mels + 1);
  for (Eigen::Index i = 0; i < n_mels + 2; ++i) fb.edges_hz(i) = mel_to_hz(mel_lo + step * static_cast<double>(i));
  for (Eigen::Index i = 0; i < n_mels; ++i) fb.centers_mel(i) = mel_lo + step * static_cast<double>(i + 1);

  fb.weights = Matrix::Zero(n_mels, bins);
  for (Eigen::Index m = 0; m < n_mels; ++m) {
    const double lo = fb.edges_hz(m), mid = fb.edges_hz(m + 1), hi = fb.edges_hz(m + 2);
    for (Eigen::Index k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      fb.weights(m, k) = w;
    }
    const double peak = fb.weights.row(m).maxCoeff();
    if (peak <= 0.0)
      throw Error("mel filterbank: filter " + std::to_string(m) + " covers no FFT bin (" + std::to_string(n_mels) +
                  " mels over " + std::to_string(bins) + " bins)");
    fb.weights.row(m) /= peak;
  }
  return fb;
}

double peak_frequency(const Eigen::Ref<const Vector>& x, double rate) {
  ComplexSpectrum spec = fft(x, rate);
  Vector mag = magnitude(spec);
  Eigen::Index idx = 0;
  mag.head(spec.n_fft / 2 + 1).maxCoeff(&idx);
  return static_cast<double>(idx) * spec.bin_hz;
}

}  // namespace smsat::dsp
