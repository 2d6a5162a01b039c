#pragma once

#include <Eigen/Dense>
#include <map>

#include "ecg/signal.hpp"

namespace ecg {

inline constexpr int kDefaultFftWindow = 512;  // samples

/// One-sided magnitude spectrum on the uniform grid 0..fs/2.
struct Spectrum {
  Eigen::ArrayXd freqs;  // Hz, length n_fft/2 + 1
  Eigen::ArrayXd mags;   // unnormalized |X(f)|
  double fs = 0.0;
  int n_fft = 0;
};

/// One-sided magnitude spectrum of the length-n_fft DFT. The input is
/// zero-padded or prefix-truncated to n_fft.
Spectrum dft(const SampledSignal& signal, int n_fft = kDefaultFftWindow);

/// Frequency of the maximum-magnitude bin with lo <= f <= hi; ties go to the
/// lower frequency. Throws EmptyBand when no bin falls inside the band.
double dominant_frequency(const Spectrum& spectrum, double lo_hz,
                          double hi_hz);

/// Cosine similarity of two magnitude spectra on identical grids.
double spectral_similarity(const Spectrum& a, const Spectrum& b);

/// Per-wave spectra: each contiguous occurrence of a class is extracted,
/// zero-padded to n_fft and transformed; occurrences of one class are
/// averaged. Throws ClassAbsent for waves without samples.
std::map<WaveClass, Spectrum> segment_spectra(const SampledSignal& signal,
                                              const LabelMask& mask,
                                              int n_fft = kDefaultFftWindow);

void write_spectrum_csv(const Spectrum& spectrum,
                        const std::filesystem::path& path);

}  // namespace ecg
