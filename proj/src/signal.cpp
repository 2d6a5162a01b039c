#include "ecg/signal.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>
#include <system_error>

#include "ecg/errors.hpp"
#include "ecg/fft.hpp"

namespace ecg {

void validate(const SampledSignal& signal) {
  if (!(signal.fs > 0.0))
    throw InvalidArgument("sampling rate must be positive, got " +
                          std::to_string(signal.fs));
  if (signal.size() < 1) throw InvalidArgument("signal must not be empty");
  if (!signal.samples.isFinite().all())
    throw InvalidArgument("signal contains NaN or Inf samples");
}

std::string_view to_string(WaveClass cls) {
  switch (cls) {
    case WaveClass::Background: return "BACKGROUND";
    case WaveClass::P: return "P";
    case WaveClass::Qrs: return "QRS";
    case WaveClass::T: return "T";
  }
  return "?";
}

std::optional<WaveClass> wave_class_from_string(std::string_view text) {
  if (text == "BACKGROUND") return WaveClass::Background;
  if (text == "P") return WaveClass::P;
  if (text == "QRS") return WaveClass::Qrs;
  if (text == "T") return WaveClass::T;
  return std::nullopt;
}

std::vector<MaskRun> mask_runs(const LabelMask& mask) {
  std::vector<MaskRun> runs;
  const Eigen::Index n = mask.size();
  Eigen::Index i = 0;
  while (i < n) {
    const WaveClass cls = mask.classes[static_cast<std::size_t>(i)];
    Eigen::Index j = i + 1;
    while (j < n && mask.classes[static_cast<std::size_t>(j)] == cls) ++j;
    if (cls != WaveClass::Background) runs.push_back({cls, i, j});
    i = j;
  }
  return runs;
}

SampledSignal normalize(const SampledSignal& signal) {
  if (signal.size() < 2)
    throw ConstantSignal("need at least 2 samples to normalize");
  const double mean = signal.samples.mean();
  const double var = (signal.samples - mean).square().mean();
  const double std_dev = std::sqrt(var);
  if (std_dev == 0.0)
    throw ConstantSignal("signal has zero standard deviation");
  return {(signal.samples - mean) / std_dev, signal.fs};
}

namespace {

// Raised-cosine mask: 0 outside [lo, hi], 1 inside, smooth transitions of
// width `w` centered on each band edge.
double band_mask(double f, double lo, double hi, double w) {
  const double half = w / 2.0;
  if (f <= lo - half || f >= hi + half) return 0.0;
  if (f < lo + half)
    return 0.5 * (1.0 - std::cos(std::numbers::pi * (f - (lo - half)) / w));
  if (f > hi - half)
    return 0.5 * (1.0 + std::cos(std::numbers::pi * (f - (hi - half)) / w));
  return 1.0;
}

}  // namespace

SampledSignal bandpass(const SampledSignal& signal, double lo_hz,
                       double hi_hz) {
  validate(signal);
  if (lo_hz < 0.0 || lo_hz >= hi_hz || hi_hz >= signal.fs / 2.0)
    throw BandOutOfRange("need 0 <= lo < hi < fs/2, got [" +
                         std::to_string(lo_hz) + ", " + std::to_string(hi_hz) +
                         "] at fs " + std::to_string(signal.fs));

  const Eigen::Index n = signal.size();
  ComplexVector spectrum = fft(signal.samples.cast<std::complex<double>>());
  for (Eigen::Index k = 0; k < n; ++k) {
    // Bin k and n-k share one physical frequency; masking both with the same
    // value keeps conjugate symmetry, so the reconstruction is real.
    const Eigen::Index folded = std::min(k, n - k);
    const double f = static_cast<double>(folded) * signal.fs /
                     static_cast<double>(n);
    spectrum[k] *= band_mask(f, lo_hz, hi_hz, kBandTransitionWidth);
  }
  return {ifft(spectrum).real().array(), signal.fs};
}

SampledSignal downsample(const SampledSignal& signal, double target_fs) {
  validate(signal);
  if (!(target_fs > 0.0))
    throw NonIntegerFactor("target rate must be positive");
  const double ratio = signal.fs / target_fs;
  const auto factor = static_cast<Eigen::Index>(std::llround(ratio));
  if (factor < 1 || std::abs(ratio - static_cast<double>(factor)) > 1e-9)
    throw NonIntegerFactor("fs/target = " + std::to_string(ratio) +
                           " is not a positive integer");
  if (factor == 1) return signal;

  const Eigen::Index out_len = (signal.size() + factor - 1) / factor;
  Eigen::ArrayXd out(out_len);
  for (Eigen::Index i = 0; i < out_len; ++i) out[i] = signal.samples[i * factor];
  return {std::move(out), target_fs};
}

namespace {

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, const std::filesystem::path& path,
                    std::size_t line_no, std::string_view field) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc{} || res.ptr != last)
    throw ParseError(path.string() + ":" + std::to_string(line_no) +
                     ": bad " + std::string(field) + " '" + std::string(text) +
                     "'");
  return value;
}

}  // namespace

void write_signal_csv(const SampledSignal& signal,
                      const std::filesystem::path& path) {
  validate(signal);
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out << "fs," << format_double(signal.fs) << "\n";
  for (Eigen::Index i = 0; i < signal.size(); ++i)
    out << format_double(signal.samples[i]) << "\n";
  if (!out) throw IoFailure("write failed for " + path.string());
}

SampledSignal read_signal_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line))
    throw ParseError(path.string() + ":1: empty file, expected 'fs,<rate>'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("fs,", 0) != 0)
    throw ParseError(path.string() + ":1: expected header 'fs,<rate>', got '" +
                     line + "'");
  const double fs = parse_double(std::string_view(line).substr(3), path, 1,
                                 "sampling rate");

  std::vector<double> samples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    samples.push_back(parse_double(line, path, line_no, "sample"));
  }

  SampledSignal signal{
      Eigen::Map<const Eigen::ArrayXd>(samples.data(),
                                       static_cast<Eigen::Index>(samples.size())),
      fs};
  validate(signal);
  return signal;
}

}  // namespace ecg
