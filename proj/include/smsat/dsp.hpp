#pragma once

#include "smsat/common.hpp"

#include <cmath>
#include <complex>
#include <string_view>

namespace smsat::dsp {

using ComplexVector = Eigen::VectorXcd;

/// Spectrum of a real sequence. `n_fft` is the transform length after
/// zero-padding to the next power of two; `input_length` is the original
/// length. bin_hz = rate / n_fft.
struct ComplexSpectrum {
  Vector re;
  Vector im;
  double bin_hz = 1.0;
  Eigen::Index input_length = 0;
  Eigen::Index n_fft = 0;
};

Eigen::Index next_pow2(Eigen::Index n);

/// Forward DFT of `x`, zero-padded to the next power of two.
ComplexSpectrum fft(const Eigen::Ref<const Vector>& x, double rate = 1.0);

/// Element-wise |X|.
Vector magnitude(const ComplexSpectrum& spec);

/// Inverse of a full-length complex spectrum; returns the real part.
Vector ifft_real(const ComplexSpectrum& spec);

/// Exact-length complex DFT (no padding). Used where circular structure of
/// the original length matters (analytic signal).
ComplexVector dft_exact(const Eigen::Ref<const Vector>& x);

/// Real signal of length `n` from its one-sided spectrum (n/2 + 1 bins).
Vector irfft(const Eigen::Ref<const ComplexVector>& half, Eigen::Index n);

/// One-sided spectrum (n/2 + 1 bins) of a real frame of length n.
ComplexVector rfft(const Eigen::Ref<const Vector>& frame);

/// c_n = sum_m x(m) cos(pi/M (m + 0.5) n), unnormalized DCT-II.
Vector dct2(const Eigen::Ref<const Vector>& x);

/// Analytic signal x + i H[x] computed in the frequency domain on the exact
/// input length.
ComplexVector analytic_signal(const Eigen::Ref<const Vector>& x);

/// Instantaneous amplitude sqrt(x^2 + H[x]^2). Requires at least 8 samples.
Vector analytic_envelope(const Eigen::Ref<const Vector>& x);

enum class Window { Hann, Rect };

std::string_view window_name(Window w);
Window parse_window(std::string_view name);

/// Periodic window of length n.
Vector make_window(Window w, Eigen::Index n);

/// Short-time spectrum. `re`/`im` are (n_fft/2 + 1) x frames, one-sided.
struct Stft {
  Matrix re;
  Matrix im;
  Eigen::Index win_len = 0;
  Eigen::Index hop = 0;
  Eigen::Index n_fft = 0;
  Window window = Window::Hann;

  Eigen::Index bins() const { return re.rows(); }
  Eigen::Index frames() const { return re.cols(); }
  Matrix power() const { return re.array().square() + im.array().square(); }
};

Eigen::Index stft_frame_count(Eigen::Index n, Eigen::Index win_len, Eigen::Index hop);

/// frames = 1 + floor((N - win_len) / hop); n_fft = 0 selects next_pow2(win_len).
/// No normalization is applied.
Stft stft(const Eigen::Ref<const Vector>& x, Eigen::Index win_len, Eigen::Index hop,
          Window window = Window::Hann, Eigen::Index n_fft = 0);

template <typename Scalar>
Scalar mel_scale(Scalar hz) {
  if (hz < Scalar(0)) throw Error("mel_scale: negative frequency");
  return Scalar(2595) * std::log10(Scalar(1) + hz / Scalar(700));
}

template <typename Scalar>
Scalar mel_to_hz(Scalar mel) {
  return Scalar(700) * (std::pow(Scalar(10), mel / Scalar(2595)) - Scalar(1));
}

/// Triangular filters, one per row, over the one-sided bins of an n_fft
/// transform. Each row is scaled so its largest weight is exactly 1.
struct MelFilterbank {
  Matrix weights;       // n_mels x (n_fft/2 + 1)
  Vector edges_hz;      // n_mels + 2
  Vector centers_mel;   // n_mels
  Eigen::Index n_fft = 0;
  double rate = 0;

  Eigen::Index n_mels() const { return weights.rows(); }
};

MelFilterbank build_mel_filterbank(Eigen::Index n_mels, Eigen::Index n_fft, double rate, double f_lo,
                                   double f_hi);

/// Index of the largest magnitude bin of fft(x) restricted to [0, n_fft/2],
/// returned as a frequency in Hz.
double peak_frequency(const Eigen::Ref<const Vector>& x, double rate);

}  // namespace smsat::dsp
