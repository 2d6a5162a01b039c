#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ecg/errors.hpp"
#include "ecg/fft.hpp"
#include "ecg/spectral.hpp"
#include "ecg/synth.hpp"

using namespace ecg;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::ArrayXd random_samples(Eigen::Index n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> dist;
  Eigen::ArrayXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = dist(rng);
  return out;
}

}  // namespace

TEST_CASE("fft matches the direct DFT sum on odd and even lengths") {
  for (const Eigen::Index n : {8, 12, 17, 64, 100}) {
    ComplexVector x(n);
    std::mt19937 rng(static_cast<unsigned>(n));
    std::normal_distribution<double> dist;
    for (Eigen::Index i = 0; i < n; ++i) x[i] = {dist(rng), dist(rng)};

    const ComplexVector fast = fft(x);
    for (Eigen::Index k = 0; k < n; ++k) {
      std::complex<double> direct = 0.0;
      for (Eigen::Index j = 0; j < n; ++j)
        direct += x[j] * std::polar(1.0, -2.0 * kPi * k * j / n);
      CHECK(std::abs(fast[k] - direct) < 1e-9);
    }
    const ComplexVector back = ifft(fast);
    for (Eigen::Index i = 0; i < n; ++i) CHECK(std::abs(back[i] - x[i]) < 1e-9);
  }
}

TEST_CASE("dft of a constant is a DC impulse") {
  const SampledSignal one{Eigen::ArrayXd::Constant(512, 1.0), 250.0};
  const Spectrum spec = dft(one, 512);
  REQUIRE(spec.freqs.size() == 257);
  CHECK(spec.mags[0] == doctest::Approx(512.0).epsilon(1e-12));
  for (Eigen::Index k = 1; k < spec.mags.size(); ++k)
    CHECK(spec.mags[k] < 1e-9);
}

TEST_CASE("dft of an on-bin cosine concentrates at one bin") {
  const double fs = 250.0;
  const int n = 512;
  const double f0 = 20.0 * fs / n;  // exactly bin 20
  Eigen::ArrayXd samples(n);
  for (int i = 0; i < n; ++i) samples[i] = std::cos(2.0 * kPi * f0 * i / fs);
  const Spectrum spec = dft({samples, fs}, n);
  Eigen::Index peak = 0;
  spec.mags.maxCoeff(&peak);
  CHECK(peak == 20);
  CHECK(spec.mags[20] == doctest::Approx(n / 2.0).epsilon(1e-6));
  CHECK(spec.freqs[20] == doctest::Approx(f0).epsilon(1e-12));
}

TEST_CASE("Parseval's identity holds on random signals") {
  // Oracle: time-domain energy vs (1/N) * two-sided spectral energy.
  for (unsigned seed = 0; seed < 100; ++seed) {
    const Eigen::ArrayXd x = random_samples(512, seed);
    const ComplexVector spectrum = fft(x.cast<std::complex<double>>());
    const double time_energy = x.square().sum();
    const double freq_energy = spectrum.array().abs2().sum() / 512.0;
    CHECK(std::abs(time_energy - freq_energy) <= 1e-9 * time_energy);
  }
}

TEST_CASE("dft magnitudes scale linearly") {
  const Eigen::ArrayXd x = random_samples(512, 7);
  const Spectrum s1 = dft({x, 250.0}, 512);
  const Spectrum s3 = dft({3.5 * x, 250.0}, 512);
  CHECK(((s3.mags - 3.5 * s1.mags).abs().maxCoeff()) < 1e-9 * s1.mags.maxCoeff());
}

TEST_CASE("dft argument validation") {
  CHECK_THROWS_AS(dft({Eigen::ArrayXd(), 250.0}, 512), EmptySignal);
  CHECK_THROWS_AS(dft({Eigen::ArrayXd::Constant(4, 1.0), 250.0}, 1),
                  InvalidArgument);
}

TEST_CASE("dominant_frequency finds a single peak") {
  const double fs = 250.0;
  Eigen::ArrayXd samples(512);
  const double f0 = 10.0 * fs / 512.0;
  for (int i = 0; i < 512; ++i)
    samples[i] = std::cos(2.0 * kPi * f0 * i / fs);
  const Spectrum spec = dft({samples, fs}, 512);
  CHECK(dominant_frequency(spec, 0.0, 125.0) ==
        doctest::Approx(f0).epsilon(1e-12));
}

TEST_CASE("dominant_frequency ties break toward the lower frequency") {
  Spectrum spec;
  spec.fs = 250.0;
  spec.n_fft = 16;
  spec.freqs = Eigen::ArrayXd::LinSpaced(9, 0.0, 8.0) * (250.0 / 16.0);
  spec.mags = Eigen::ArrayXd::Constant(9, 1.0);
  CHECK(dominant_frequency(spec, 0.0, 125.0) == 0.0);
  CHECK(dominant_frequency(spec, 10.0, 125.0) == spec.freqs[1]);
}

TEST_CASE("dominant_frequency rejects empty bands") {
  const Spectrum spec = dft({random_samples(512, 1), 250.0}, 512);
  CHECK_THROWS_AS(dominant_frequency(spec, 126.0, 130.0), EmptyBand);
}

TEST_CASE("spectral_similarity basics") {
  const Spectrum a = dft({random_samples(512, 2), 250.0}, 512);
  CHECK(spectral_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  Spectrum b = a;
  b.mags *= 2.0;
  CHECK(spectral_similarity(a, b) == doctest::Approx(1.0).epsilon(1e-12));

  Spectrum u = a, v = a;
  u.mags.setZero();
  v.mags.setZero();
  u.mags[3] = 1.0;
  v.mags[7] = 1.0;
  CHECK(spectral_similarity(u, v) == 0.0);

  Spectrum other = a;
  other.n_fft = 256;
  CHECK_THROWS_AS(spectral_similarity(a, other), ResolutionMismatch);
  Spectrum zero = a;
  zero.mags.setZero();
  CHECK_THROWS_AS(spectral_similarity(a, zero), ZeroSpectrum);
}

TEST_CASE("segment_spectra requires wave samples") {
  const SampledSignal signal{random_samples(200, 3), 250.0};
  LabelMask mask;
  mask.classes.assign(200, WaveClass::Background);
  CHECK_THROWS_AS(segment_spectra(signal, mask, 512), ClassAbsent);
}

TEST_CASE("segment_spectra of the default beat yields three nonzero spectra") {
  const BeatRecord beat = synth_beat(default_beat_config());
  const auto spectra = segment_spectra(beat.signal, beat.mask, 512);
  REQUIRE(spectra.size() == 3);
  for (const auto& [cls, spec] : spectra) {
    CAPTURE(to_string(cls));
    CHECK(spec.mags.maxCoeff() > 0.0);
    CHECK(spec.mags.minCoeff() >= 0.0);
  }
}

TEST_CASE("averaging identical beats leaves the spectrum unchanged") {
  GaussianBeatConfig cfg = default_beat_config();
  const auto one = synth_beat(cfg);
  cfg.n_beats = 2;
  const auto two = synth_beat(cfg);
  const auto s1 = segment_spectra(one.signal, one.mask, 512);
  const auto s2 = segment_spectra(two.signal, two.mask, 512);
  for (const auto& [cls, spec] : s1) {
    const double scale = spec.mags.maxCoeff();
    CHECK((s2.at(cls).mags - spec.mags).abs().maxCoeff() < 1e-9 * scale);
  }
}

TEST_CASE("QRS has the highest dominant frequency of the default beat") {
  const BeatRecord beat = synth_beat(default_beat_config());
  const auto spectra = segment_spectra(beat.signal, beat.mask, 512);
  const double f_p = dominant_frequency(spectra.at(WaveClass::P), 0.0, 125.0);
  const double f_qrs =
      dominant_frequency(spectra.at(WaveClass::Qrs), 0.0, 125.0);
  const double f_t = dominant_frequency(spectra.at(WaveClass::T), 0.0, 125.0);
  CHECK(f_qrs > f_p);
  CHECK(f_qrs > f_t);
}
