#include "oracles.hpp"
#include "smsat/dsp.hpp"
#include "smsat/rng.hpp"

#include <doctest.h>

using namespace smsat;

namespace {

Vector random_vector(Eigen::Index n, std::uint64_t seed) {
  CounterRng rng(seed);
  Vector v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_CASE("fft matches a direct DFT of the zero-padded input") {
  for (Eigen::Index n : {1, 2, 3, 7, 16, 33, 100}) {
    const Vector x = random_vector(n, static_cast<std::uint64_t>(n));
    const auto s = dsp::fft(x, 8000.0);
    CHECK(s.n_fft == dsp::next_pow2(n));
    CHECK(s.bin_hz == doctest::Approx(8000.0 / static_cast<double>(s.n_fft)));
    const auto ref = oracle::direct_dft(to_std(x), static_cast<std::size_t>(s.n_fft));
    for (Eigen::Index k = 0; k < s.n_fft; ++k) {
      CHECK(std::abs(s.re(k) - ref[k].real()) < 1e-9);
      CHECK(std::abs(s.im(k) - ref[k].imag()) < 1e-9);
    }
  }
}

TEST_CASE("ifft_real inverts fft") {
  const Vector x = random_vector(64, 3);
  const Vector y = dsp::ifft_real(dsp::fft(x));
  CHECK((y.head(64) - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dft_exact uses the original length") {
  const Vector x = random_vector(12, 5);
  const auto X = dsp::dft_exact(x);
  const auto ref = oracle::direct_dft(to_std(x), 12);
  REQUIRE(X.size() == 12);
  for (int k = 0; k < 12; ++k) CHECK(std::abs(X(k) - ref[k]) < 1e-10);
}

TEST_CASE("rfft and irfft round trip on odd and even lengths") {
  for (Eigen::Index n : {9, 10}) {
    const Vector x = random_vector(n, 11);
    const auto half = dsp::rfft(x);
    CHECK(half.size() == n / 2 + 1);
    CHECK((dsp::irfft(half, n) - x).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("dct2 matches the double-loop formula") {
  for (Eigen::Index n : {1, 5, 13, 64}) {
    const Vector x = random_vector(n, 20 + static_cast<std::uint64_t>(n));
    const Vector c = dsp::dct2(x);
    const auto ref = oracle::dct2_loop(to_std(x));
    for (Eigen::Index k = 0; k < n; ++k) CHECK(std::abs(c(k) - ref[static_cast<std::size_t>(k)]) < 1e-10);
  }
}

TEST_CASE("analytic envelope of a unit tone is flat in the interior") {
  const int rate = 1000, n = 1000;
  Vector x(n);
  for (int i = 0; i < n; ++i) x(i) = std::cos(2 * oracle::kPi * 25.0 * i / rate + 0.4);
  const Vector env = dsp::analytic_envelope(x);
  const int lo = n / 10, hi = n - n / 10;
  for (int i = lo; i < hi; ++i) CHECK(std::abs(env(i) - 1.0) < 1e-3);
}

TEST_CASE("analytic signal imaginary part of a cosine is a sine") {
  const int n = 256;
  Vector x(n);
  for (int i = 0; i < n; ++i) x(i) = std::cos(2 * oracle::kPi * 8 * i / n);
  const auto z = dsp::analytic_signal(x);
  for (int i = 0; i < n; ++i) CHECK(std::abs(z(i).imag() - std::sin(2 * oracle::kPi * 8 * i / n)) < 1e-10);
}

TEST_CASE("analytic envelope rejects very short input") {
  CHECK_THROWS_AS(dsp::analytic_envelope(Vector::Ones(4)), Error);
}

TEST_CASE("mel scale anchors") {
  CHECK(std::abs(dsp::mel_scale(1000.0) - 1000.0) < 0.05);
  CHECK(dsp::mel_scale(0.0) == 0.0);
  CHECK(dsp::mel_to_hz(dsp::mel_scale(4321.0)) == doctest::Approx(4321.0).epsilon(1e-12));
  CHECK_THROWS_AS(dsp::mel_scale(-1.0), Error);
}

TEST_CASE("stft frame count and framing") {
  CHECK(dsp::stft_frame_count(16000, 400, 160) == 98);
  const Vector x = random_vector(1000, 9);
  const auto s = dsp::stft(x, 400, 160);
  CHECK(s.frames() == 1 + (1000 - 400) / 160);
  CHECK(s.n_fft == 512);
  CHECK(s.bins() == 257);
  // Column 2 equals the windowed frame starting at 320 transformed directly.
  std::vector<double> frame(400);
  for (int i = 0; i < 400; ++i) frame[i] = x(320 + i) * (0.5 - 0.5 * std::cos(2 * oracle::kPi * i / 400));
  const auto ref = oracle::direct_dft(frame, 512);
  for (int k = 0; k < 257; ++k) {
    CHECK(std::abs(s.re(k, 2) - ref[k].real()) < 1e-9);
    CHECK(std::abs(s.im(k, 2) - ref[k].imag()) < 1e-9);
  }
}

TEST_CASE("periodic hann window") {
  const Vector w = dsp::make_window(dsp::Window::Hann, 8);
  CHECK(w(0) == doctest::Approx(0.0));
  CHECK(w(4) == doctest::Approx(1.0));
  CHECK(w(2) == doctest::Approx(0.5));
  CHECK(dsp::parse_window(dsp::window_name(dsp::Window::Rect)) == dsp::Window::Rect);
}

TEST_CASE("mel filterbank rows peak at one and stay inside their edges") {
  const auto fb = dsp::build_mel_filterbank(64, 512, 16000, 0, 8000);
  CHECK(fb.weights.rows() == 64);
  CHECK(fb.weights.cols() == 257);
  for (int m = 0; m < 64; ++m) {
    CHECK(fb.weights.row(m).maxCoeff() == doctest::Approx(1.0));
    for (int k = 0; k < 257; ++k) {
      const double f = k * 16000.0 / 512;
      if (f <= fb.edges_hz(m) || f >= fb.edges_hz(m + 2)) CHECK(fb.weights(m, k) == 0.0);
    }
  }
  CHECK_THROWS_AS(dsp::build_mel_filterbank(200, 64, 16000, 0, 8000), Error);
}

TEST_CASE("peak frequency of a tone") {
  Vector x(4096);
  for (int i = 0; i < 4096; ++i) x(i) = std::sin(2 * oracle::kPi * 250.0 * i / 4096.0 * 4.0);
  CHECK(dsp::peak_frequency(x, 4096.0) == doctest::Approx(1000.0).epsilon(1e-3));
}
