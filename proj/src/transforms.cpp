#include "ecg/transforms.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "ecg/errors.hpp"
#include "ecg/fft.hpp"

namespace ecg {

QuadratureRule gauss_legendre_rule(int n) {
  if (n < 1 || n > 64)
    throw OrderOutOfRange("rule order must be in 1..64, got " +
                          std::to_string(n));

  QuadratureRule rule;
  rule.order = n;
  rule.nodes.resize(n);
  rule.weights.resize(n);

  // Roots come in +- pairs; solve for the positive half and mirror, which
  // keeps the node set exactly symmetric.
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Chebyshev-based initial guess for the i-th largest root.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      // Three-term recurrence for P_n(x) and its derivative.
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-14) break;
    }
    // Re-evaluate the derivative at the converged root for the weight.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);

    rule.nodes[n - 1 - i] = x;
    rule.nodes[i] = -x;
    rule.weights[n - 1 - i] = w;
    rule.weights[i] = w;
  }
  if (n % 2 == 1) {
    // Odd rules have a node exactly at 0; the loop above computes it with
    // x ~ 0 where the Newton step is well conditioned, but pin it exactly.
    rule.nodes[n / 2] = 0.0;
  }
  return rule;
}

double integrate(const QuadratureRule& rule,
                 const std::function<double(double)>& f) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i)
    acc += rule.weights[i] * f(rule.nodes[i]);
  return acc;
}

AnalyticSignal hilbert(const SampledSignal& signal) {
  validate(signal);
  const Eigen::Index n = signal.size();
  if (n < 4) throw EmptySignal("analytic signal needs at least 4 samples");

  ComplexVector spectrum = fft(signal.samples.cast<std::complex<double>>());
  // One-sided spectrum: DC and Nyquist keep weight 1, positive frequencies
  // double, negative frequencies vanish.
  for (Eigen::Index k = 1; k < n; ++k) {
    if (2 * k < n)
      spectrum[k] *= 2.0;
    else if (2 * k > n)
      spectrum[k] = 0.0;
  }
  const ComplexVector analytic = ifft(spectrum);

  AnalyticSignal out;
  out.fs = signal.fs;
  out.envelope = analytic.array().abs();
  out.phase.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double ph = std::arg(analytic[i]);  // [-pi, pi]
    if (ph <= -std::numbers::pi) ph = std::numbers::pi;
    out.phase[i] = ph;
  }
  return out;
}

Eigen::Index euler_step_samples(double dt, double fs) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
  const auto step = static_cast<Eigen::Index>(std::llround(dt * fs));
  if (step < 1)
    throw InvalidArgument("dt " + std::to_string(dt) +
                          " s is below one sample at fs " + std::to_string(fs));
  return step;
}

SampledSignal euler_diff(const SampledSignal& signal, double dt) {
  validate(signal);
  const Eigen::Index n = signal.size();
  const Eigen::Index step = euler_step_samples(dt, signal.fs);
  if (step >= n)
    throw StepTooLarge("step " + std::to_string(step) +
                       " samples >= signal length " + std::to_string(n));

  const double effective_dt = static_cast<double>(step) / signal.fs;
  Eigen::ArrayXd out(n);
  for (Eigen::Index i = 0; i + step < n; ++i)
    out[i] = (signal.samples[i + step] - signal.samples[i]) / effective_dt;
  for (Eigen::Index i = n - step; i < n; ++i) out[i] = out[n - step - 1];
  return {std::move(out), signal.fs};
}

namespace {

double interp_clamped(const Eigen::ArrayXd& samples, double fs, double t) {
  const Eigen::Index n = samples.size();
  const double pos = std::clamp(t * fs, 0.0, static_cast<double>(n - 1));
  const auto i0 = static_cast<Eigen::Index>(std::floor(pos));
  const Eigen::Index i1 = std::min(i0 + 1, n - 1);
  const double frac = pos - static_cast<double>(i0);
  return samples[i0] * (1.0 - frac) + samples[i1] * frac;
}

}  // namespace

SampledSignal gl_smooth(const SampledSignal& signal, double window_s, int n) {
  validate(signal);
  if (window_s < 2.0 / signal.fs)
    throw WindowTooSmall("window " + std::to_string(window_s) +
                         " s is below two samples at fs " +
                         std::to_string(signal.fs));
  const QuadratureRule rule = gauss_legendre_rule(n);

  const Eigen::Index len = signal.size();
  const double half = window_s / 2.0;
  Eigen::ArrayXd out(len);
  for (Eigen::Index i = 0; i < len; ++i) {
    const double center = static_cast<double>(i) / signal.fs;
    double acc = 0.0;
    for (Eigen::Index k = 0; k < rule.nodes.size(); ++k)
      acc += rule.weights[k] *
             interp_clamped(signal.samples, signal.fs,
                            center + half * rule.nodes[k]);
    out[i] = 0.5 * acc;  // sum of weights is 2, so this is the window mean
  }
  return {std::move(out), signal.fs};
}

std::string_view to_string(Preprocessing method) {
  switch (method) {
    case Preprocessing::Raw: return "raw";
    case Preprocessing::Hilbert: return "hilbert";
    case Preprocessing::Euler: return "euler";
    case Preprocessing::GaussLegendre: return "gauss-legendre";
  }
  return "?";
}

std::optional<Preprocessing> preprocessing_from_string(std::string_view text) {
  if (text == "raw") return Preprocessing::Raw;
  if (text == "hilbert") return Preprocessing::Hilbert;
  if (text == "euler") return Preprocessing::Euler;
  if (text == "gauss-legendre") return Preprocessing::GaussLegendre;
  return std::nullopt;
}

std::string describe_transform(Preprocessing method,
                               const TransformParams& params, double fs) {
  std::ostringstream os;
  switch (method) {
    case Preprocessing::Raw:
      os << "none";
      break;
    case Preprocessing::Hilbert:
      os << "envelope";
      break;
    case Preprocessing::Euler: {
      const Eigen::Index step = euler_step_samples(params.euler_dt, fs);
      os << "dt=" << static_cast<double>(step) / fs << "s(step=" << step
         << ")";
      break;
    }
    case Preprocessing::GaussLegendre:
      os << "n=" << params.gl_nodes << ";window=" << params.gl_window << "s";
      break;
  }
  return os.str();
}

SampledSignal apply_preprocessing(const SampledSignal& signal,
                                  Preprocessing method,
                                  const TransformParams& params) {
  switch (method) {
    case Preprocessing::Raw:
      return signal;
    case Preprocessing::Hilbert: {
      AnalyticSignal analytic = hilbert(signal);
      return {std::move(analytic.envelope), signal.fs};
    }
    case Preprocessing::Euler:
      return euler_diff(signal, params.euler_dt);
    case Preprocessing::GaussLegendre:
      return gl_smooth(signal, params.gl_window, params.gl_nodes);
  }
  throw InvalidArgument("unknown preprocessing method");
}

}  // namespace ecg
