#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string_view>

#include "ecg/signal.hpp"

namespace ecg {

inline constexpr double kDefaultEulerDt = 0.005;   // seconds
inline constexpr int kDefaultGlNodes = 5;
inline constexpr double kDefaultGlWindow = 0.04;   // seconds

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
struct QuadratureRule {
  Eigen::ArrayXd nodes;    // strictly increasing, symmetric about 0
  Eigen::ArrayXd weights;  // positive, sums to 2
  int order = 0;
};

/// Nodes are the Legendre-polynomial roots (Newton iteration on the
/// three-term recurrence, tolerance 1e-14); weights 2/((1-x^2) P_n'(x)^2).
/// Throws OrderOutOfRange unless 1 <= n <= 64.
QuadratureRule gauss_legendre_rule(int n);

/// Integral of f over [-1, 1] approximated by the rule.
double integrate(const QuadratureRule& rule,
                 const std::function<double(double)>& f);

/// Instantaneous amplitude and phase of the analytic signal.
struct AnalyticSignal {
  Eigen::ArrayXd envelope;  // >= 0
  Eigen::ArrayXd phase;     // radians in (-pi, pi]
  double fs = 0.0;
};

/// Analytic signal via the one-sided spectrum: transform, zero the negative
/// frequencies, double the positive ones (DC and Nyquist unscaled), inverse
/// transform. Needs length >= 4.
AnalyticSignal hilbert(const SampledSignal& signal);

/// Forward difference (x[i+step] - x[i]) * fs / step with step =
/// round(dt * fs); the trailing `step` samples repeat the last computed
/// value. Throws StepTooLarge when step >= length.
SampledSignal euler_diff(const SampledSignal& signal,
                         double dt = kDefaultEulerDt);

/// The forward-difference step actually realizable on the grid, in samples.
Eigen::Index euler_step_samples(double dt, double fs);

/// Sliding-window quadrature mean: the window [t - w/2, t + w/2] is mapped
/// onto [-1, 1], the signal is evaluated at the rule's nodes by linear
/// interpolation (clamped at the ends), and the output is (1/2) sum w_k f_k.
SampledSignal gl_smooth(const SampledSignal& signal,
                        double window_s = kDefaultGlWindow,
                        int n = kDefaultGlNodes);

/// The four Table-2 style preprocessing branches.
enum class Preprocessing { Raw, Hilbert, Euler, GaussLegendre };

std::string_view to_string(Preprocessing method);
std::optional<Preprocessing> preprocessing_from_string(std::string_view text);

struct TransformParams {
  double euler_dt = kDefaultEulerDt;
  int gl_nodes = kDefaultGlNodes;
  double gl_window = kDefaultGlWindow;
};

/// Human-readable echo of the parameters a method actually used, e.g.
/// "dt=0.004s(step=1)" for Euler at 250 Hz.
std::string describe_transform(Preprocessing method,
                               const TransformParams& params, double fs);

/// Apply one preprocessing branch. Hilbert feeds the envelope downstream;
/// Raw returns the input unchanged.
SampledSignal apply_preprocessing(const SampledSignal& signal,
                                  Preprocessing method,
                                  const TransformParams& params = {});

}  // namespace ecg
