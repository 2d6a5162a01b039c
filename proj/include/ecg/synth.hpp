#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "ecg/signal.hpp"
#include "ecg/spectral.hpp"

namespace ecg {

/// One Gaussian lobe A * exp(-(t - center)^2 / (2 sigma^2)).
struct GaussianComponent {
  double amplitude = 0.0;  // mV; negative for Q/S deflections
  double center = 0.0;     // seconds from beat start
  double sigma = 0.0;      // seconds, > 0
};

/// Five-lobe PQRST beat, tiled every beat_period for n_beats, plus white
/// Gaussian noise from a per-call seeded generator.
struct GaussianBeatConfig {
  GaussianComponent p, q, r, s, t;
  double beat_period = 0.8;  // seconds
  int n_beats = 1;
  double fs = kDefaultSampleRate;
  double noise_std = 0.0;  // mV
  std::uint64_t seed = 0;
};

/// Physiologically plausible defaults; the CLI baseline, not ground truth.
GaussianBeatConfig default_beat_config();

/// Throws ConfigInvalid unless centers are ordered P<Q<R<S<T, sigmas are
/// positive, and beat_period > t_T + 3*sigma_T.
void validate(const GaussianBeatConfig& config);

/// Evaluate one Gaussian component on a time grid.
Eigen::ArrayXd gaussian_wave(const GaussianComponent& component,
                             const Eigen::ArrayXd& grid);

struct BeatRecord {
  SampledSignal signal;
  LabelMask mask;
};

/// Generate the tiled beat train with its ground-truth mask. Samples within
/// 3 sigma of a component center get that component's class (Q/R/S map to
/// QRS); overlaps resolve with priority QRS > P > T.
BeatRecord synth_beat(const GaussianBeatConfig& config);

struct SpectrumCheck {
  bool accepted = false;
  double score = 0.0;
};

/// Compare the signal's spectrum (at the reference's window length) against
/// a reference spectrum; accept iff cosine similarity >= threshold.
SpectrumCheck validate_spectrum(const SampledSignal& synth,
                                const Spectrum& reference, double threshold);

struct AdjustOutcome {
  GaussianBeatConfig config;
  double score = 0.0;
  int iterations = 0;
  bool accepted = false;
};

/// Greedy coordinate search toward the reference spectrum: per iteration try
/// scaling each width by {0.9, 1.1} and each amplitude magnitude by
/// {0.95, 1.05}, keep the single change that most increases the similarity
/// score, stop on acceptance, on max_iters, or when no change improves.
AdjustOutcome adjust_search(const GaussianBeatConfig& config,
                            const Spectrum& reference, double threshold,
                            int max_iters);

/// adjust_search that throws NotConverged (carrying the best score) when the
/// iteration budget runs out without acceptance.
AdjustOutcome adjust_until_valid(const GaussianBeatConfig& config,
                                 const Spectrum& reference, double threshold,
                                 int max_iters);

}  // namespace ecg
