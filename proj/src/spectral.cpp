#include "ecg/spectral.hpp"

#include <charconv>
#include <fstream>

#include "ecg/errors.hpp"
#include "ecg/fft.hpp"

namespace ecg {

Spectrum dft(const SampledSignal& signal, int n_fft) {
  if (signal.size() == 0) throw EmptySignal("cannot transform empty signal");
  if (n_fft < 2) throw InvalidArgument("n_fft must be >= 2");

  ComplexVector padded = ComplexVector::Zero(n_fft);
  const Eigen::Index copy_len = std::min<Eigen::Index>(signal.size(), n_fft);
  padded.head(copy_len) =
      signal.samples.head(copy_len).cast<std::complex<double>>();

  const ComplexVector transformed = fft(padded);
  const Eigen::Index bins = n_fft / 2 + 1;

  Spectrum spectrum;
  spectrum.fs = signal.fs;
  spectrum.n_fft = n_fft;
  spectrum.freqs = Eigen::ArrayXd::LinSpaced(bins, 0.0,
                                             static_cast<double>(bins - 1)) *
                   (signal.fs / static_cast<double>(n_fft));
  spectrum.mags = transformed.head(bins).array().abs();
  return spectrum;
}

double dominant_frequency(const Spectrum& spectrum, double lo_hz,
                          double hi_hz) {
  if (lo_hz < 0.0 || lo_hz > hi_hz)
    throw InvalidArgument("band must satisfy 0 <= lo <= hi");

  double best_freq = 0.0;
  double best_mag = -1.0;
  bool found = false;
  for (Eigen::Index k = 0; k < spectrum.freqs.size(); ++k) {
    const double f = spectrum.freqs[k];
    if (f < lo_hz || f > hi_hz) continue;
    found = true;
    if (spectrum.mags[k] > best_mag) {  // strict: ties keep the lower bin
      best_mag = spectrum.mags[k];
      best_freq = f;
    }
  }
  if (!found)
    throw EmptyBand("no spectrum bins in [" + std::to_string(lo_hz) + ", " +
                    std::to_string(hi_hz) + "] Hz");
  return best_freq;
}

double spectral_similarity(const Spectrum& a, const Spectrum& b) {
  if (a.n_fft != b.n_fft || a.fs != b.fs)
    throw ResolutionMismatch("spectra computed on different grids (n_fft " +
                             std::to_string(a.n_fft) + " vs " +
                             std::to_string(b.n_fft) + ", fs " +
                             std::to_string(a.fs) + " vs " +
                             std::to_string(b.fs) + ")");
  const double norm_a = std::sqrt(a.mags.square().sum());
  const double norm_b = std::sqrt(b.mags.square().sum());
  if (norm_a == 0.0 || norm_b == 0.0)
    throw ZeroSpectrum("cosine similarity undefined for an all-zero spectrum");
  return (a.mags * b.mags).sum() / (norm_a * norm_b);
}

std::map<WaveClass, Spectrum> segment_spectra(const SampledSignal& signal,
                                              const LabelMask& mask,
                                              int n_fft) {
  if (mask.size() != signal.size())
    throw LengthMismatch("mask length " + std::to_string(mask.size()) +
                         " != signal length " + std::to_string(signal.size()));

  std::map<WaveClass, Eigen::ArrayXd> sums;
  std::map<WaveClass, int> counts;
  for (const MaskRun& run : mask_runs(mask)) {
    const SampledSignal segment{
        signal.samples.segment(run.begin, run.end - run.begin), signal.fs};
    const Spectrum spec = dft(segment, n_fft);
    auto [it, inserted] = sums.try_emplace(run.cls, spec.mags);
    if (!inserted) it->second += spec.mags;
    counts[run.cls] += 1;
  }

  std::map<WaveClass, Spectrum> result;
  for (const WaveClass cls : {WaveClass::P, WaveClass::Qrs, WaveClass::T}) {
    const auto it = sums.find(cls);
    if (it == sums.end())
      throw ClassAbsent(std::string(to_string(cls)) +
                        " has no samples in the mask");
    Spectrum spec;
    spec.fs = signal.fs;
    spec.n_fft = n_fft;
    const Eigen::Index bins = n_fft / 2 + 1;
    spec.freqs = Eigen::ArrayXd::LinSpaced(bins, 0.0,
                                           static_cast<double>(bins - 1)) *
                 (signal.fs / static_cast<double>(n_fft));
    spec.mags = it->second / static_cast<double>(counts[cls]);
    result.emplace(cls, std::move(spec));
  }
  return result;
}

void write_spectrum_csv(const Spectrum& spectrum,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out << "freq_hz,magnitude\n";
  char buf[64];
  for (Eigen::Index k = 0; k < spectrum.freqs.size(); ++k) {
    auto r1 = std::to_chars(buf, buf + sizeof(buf), spectrum.freqs[k]);
    out.write(buf, r1.ptr - buf);
    out.put(',');
    auto r2 = std::to_chars(buf, buf + sizeof(buf), spectrum.mags[k]);
    out.write(buf, r2.ptr - buf);
    out.put('\n');
  }
  if (!out) throw IoFailure("write failed for " + path.string());
}

}  // namespace ecg
