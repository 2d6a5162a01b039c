#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace ecg {

/// Uniformly sampled real-valued trace (millivolts) with its sampling rate.
struct SampledSignal {
  Eigen::ArrayXd samples;
  double fs = 0.0;  // Hz

  Eigen::Index size() const { return samples.size(); }
  double duration() const { return static_cast<double>(size()) / fs; }
};

/// Throws InvalidArgument unless fs > 0, length >= 1 and all samples finite.
void validate(const SampledSignal& signal);

enum class WaveClass : std::uint8_t { Background = 0, P = 1, Qrs = 2, T = 3 };

std::string_view to_string(WaveClass cls);

/// Exact-match parse of "BACKGROUND" / "P" / "QRS" / "T".
std::optional<WaveClass> wave_class_from_string(std::string_view text);

/// Per-sample class labels over the same grid as a companion SampledSignal.
struct LabelMask {
  std::vector<WaveClass> classes;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(classes.size());
  }
};

/// Maximal run of consecutive samples sharing one class; [begin, end).
struct MaskRun {
  WaveClass cls;
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
};

/// All maximal non-background runs, in increasing sample order.
std::vector<MaskRun> mask_runs(const LabelMask& mask);

/// Shift/scale to mean 0 and population standard deviation 1.
/// Throws ConstantSignal on zero variance.
SampledSignal normalize(const SampledSignal& signal);

/// Zero-phase frequency-domain band-pass: DFT, multiply by a mask that is 0
/// outside [lo, hi] and 1 inside, with raised-cosine transitions of width
/// 0.25 Hz centered on each edge, inverse DFT, real part.
/// Throws BandOutOfRange unless 0 <= lo < hi < fs/2.
SampledSignal bandpass(const SampledSignal& signal, double lo_hz,
                       double hi_hz);

/// Keep every k-th sample, k = fs/target_fs. Throws NonIntegerFactor when
/// the ratio is not an integer. The caller is responsible for band-limiting
/// below target_fs/2 first.
SampledSignal downsample(const SampledSignal& signal, double target_fs);

/// Signal file format: UTF-8 CSV, first line "fs,<rate>", then one sample
/// per line. Values are written with shortest round-trip formatting so the
/// file round-trips bit exactly through 64-bit floats.
void write_signal_csv(const SampledSignal& signal,
                      const std::filesystem::path& path);
SampledSignal read_signal_csv(const std::filesystem::path& path);

inline constexpr double kDefaultSampleRate = 250.0;   // Hz
inline constexpr double kDefaultBandLow = 0.5;        // Hz
inline constexpr double kDefaultBandHigh = 50.0;      // Hz
inline constexpr double kBandTransitionWidth = 0.25;  // Hz

}  // namespace ecg
