#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecg/neural.hpp"
#include "ecg/signal.hpp"
#include "ecg/spectral.hpp"
#include "ecg/synth.hpp"
#include "ecg/transforms.hpp"

namespace ecg {

/// r[l] = sum_t x(t) y(t-l) for l in [-max_lag, max_lag]; out-of-range y
/// terms count as zero. `normalized` divides by ||x|| ||y||.
struct CrossCorrelation {
  int max_lag = 0;
  Eigen::ArrayXd raw;         // index l + max_lag
  Eigen::ArrayXd normalized;

  double at(int lag) const { return raw[lag + max_lag]; }
  double normalized_at(int lag) const { return normalized[lag + max_lag]; }
};

CrossCorrelation cross_correlation(const Eigen::ArrayXd& x,
                                   const Eigen::ArrayXd& y, int max_lag);

/// Noise-free per-wave prototypes sampled over each wave's labeled window
/// (Q, R and S sum into one QRS prototype).
std::map<WaveClass, Eigen::ArrayXd> wave_templates(
    const GaussianBeatConfig& config);

struct SegmentClassification {
  WaveClass cls = WaveClass::Background;
  double score = 0.0;
};

/// Assign the class whose template (linearly resampled to the segment
/// length) has the highest normalized cross-correlation peak over lags up to
/// +-10% of the segment length. Ties resolve in class order P < QRS < T.
SegmentClassification classify_segment(
    const Eigen::ArrayXd& segment,
    const std::map<WaveClass, Eigen::ArrayXd>& templates);

struct SegMetrics {
  double accuracy = 0.0;
  double iou = 0.0;
  double f1 = 0.0;
};

/// Per-timestep accuracy, intersection-over-union and F1 of binary masks;
/// IoU and F1 are 1 when both masks are empty.
SegMetrics segmentation_metrics(std::span<const std::uint8_t> pred,
                                std::span<const std::uint8_t> truth);

/// Median wall-clock milliseconds of canonical-window eval-mode forwards,
/// after one untimed warm-up.
template <typename Scalar>
double time_inference(const ModelParams<Scalar>& params,
                      const SampledSignal& signal, int repeats);

/// Two-sided paired t-test p-value; identical samples give t = 0 => p = 1.
double paired_t_pvalue(const std::vector<double>& a,
                       const std::vector<double>& b);

/// "<sysname> <release> <machine>" of the running host.
std::string host_descriptor();

struct CompareOptions {
  std::vector<Preprocessing> methods = {
      Preprocessing::Raw, Preprocessing::Euler, Preprocessing::Hilbert,
      Preprocessing::GaussLegendre};
  std::vector<WaveClass> waves = {WaveClass::P, WaveClass::Qrs, WaveClass::T};
  int seeds = 3;
  std::uint64_t base_seed = 0;
  double learning_rate = 1e-3;
  int epochs = 12;
  int batch_size = 8;
  TransformParams transform;
  int n_fft = kDefaultFftWindow;
  int timing_repeats = 5;
  int jobs = 1;
};

struct RunResult {
  Preprocessing method = Preprocessing::Raw;
  WaveClass wave = WaveClass::Qrs;
  std::uint64_t seed = 0;
  double train_accuracy = 0.0;
  SegMetrics test;
  double test_loss = 0.0;
  double inference_ms = 0.0;
  double transform_ms = 0.0;
  std::string transform_params;
  std::vector<double> loss_curve;
};

struct Aggregate {
  Preprocessing method = Preprocessing::Raw;
  WaveClass wave = WaveClass::Qrs;
  double train_accuracy = 0.0;
  SegMetrics test;
  double test_loss = 0.0;
  double inference_ms = 0.0;
  double transform_ms = 0.0;
  std::string transform_params;
  std::optional<double> p_value_vs_raw;  // absent for raw / without raw
};

struct EvalReport {
  std::vector<RunResult> runs;
  std::vector<Aggregate> aggregates;
  // Mean per-wave spectra of the preprocessed test records, per method.
  std::vector<std::tuple<Preprocessing, WaveClass, Spectrum>> segment_spectra;
  std::string host;
  std::string config_echo;
};

/// Train one model per (method, wave, seed) on an 80/20 record split and
/// aggregate Table-style metrics with a paired t-test against the raw
/// branch. Training runs in float32; metrics and statistics in double.
EvalReport compare_preprocessing(const std::vector<BeatRecord>& corpus,
                                 const CompareOptions& options);

void write_report_csv(const EvalReport& report,
                      const std::filesystem::path& path);
void write_loss_curves_csv(const EvalReport& report,
                           const std::filesystem::path& path);
void write_segment_spectra_csv(const EvalReport& report,
                               const std::filesystem::path& path);

}  // namespace ecg
