#include "ecg/synth.hpp"

#include <array>
#include <cmath>
#include <random>

#include "ecg/errors.hpp"

namespace ecg {

GaussianBeatConfig default_beat_config() {
  GaussianBeatConfig cfg;
  cfg.p = {0.15, 0.10, 0.020};
  cfg.q = {-0.10, 0.19, 0.008};
  cfg.r = {1.00, 0.21, 0.010};
  cfg.s = {-0.20, 0.23, 0.008};
  cfg.t = {0.30, 0.40, 0.035};
  cfg.beat_period = 0.8;
  cfg.n_beats = 1;
  cfg.fs = kDefaultSampleRate;
  cfg.noise_std = 0.0;
  cfg.seed = 0;
  return cfg;
}

namespace {

std::array<const GaussianComponent*, 5> components(
    const GaussianBeatConfig& cfg) {
  return {&cfg.p, &cfg.q, &cfg.r, &cfg.s, &cfg.t};
}

}  // namespace

void validate(const GaussianBeatConfig& cfg) {
  for (const auto* c : components(cfg)) {
    if (!(c->sigma > 0.0)) throw ConfigInvalid("component sigma must be > 0");
    if (!std::isfinite(c->amplitude) || !std::isfinite(c->center) ||
        !std::isfinite(c->sigma))
      throw ConfigInvalid("component fields must be finite");
  }
  if (!(cfg.p.center < cfg.q.center && cfg.q.center < cfg.r.center &&
        cfg.r.center < cfg.s.center && cfg.s.center < cfg.t.center))
    throw ConfigInvalid("centers must be ordered t_P < t_Q < t_R < t_S < t_T");
  if (!(cfg.beat_period > cfg.t.center + 3.0 * cfg.t.sigma))
    throw ConfigInvalid("beat_period must exceed t_T + 3*sigma_T");
  if (cfg.n_beats < 1) throw ConfigInvalid("n_beats must be >= 1");
  if (!(cfg.fs > 0.0)) throw ConfigInvalid("fs must be > 0");
  if (cfg.noise_std < 0.0) throw ConfigInvalid("noise_std must be >= 0");
}

Eigen::ArrayXd gaussian_wave(const GaussianComponent& component,
                             const Eigen::ArrayXd& grid) {
  const double denom = 2.0 * component.sigma * component.sigma;
  return component.amplitude * (-(grid - component.center).square() / denom)
                                   .exp();
}

BeatRecord synth_beat(const GaussianBeatConfig& cfg) {
  validate(cfg);

  const auto total =
      static_cast<Eigen::Index>(std::llround(cfg.beat_period * cfg.fs)) *
      cfg.n_beats;
  Eigen::ArrayXd samples = Eigen::ArrayXd::Zero(total);
  LabelMask mask;
  mask.classes.assign(static_cast<std::size_t>(total), WaveClass::Background);

  // Sum the tiled components. Evaluation is restricted to +-10 sigma around
  // each center; beyond that exp() underflows far below any test tolerance.
  for (int beat = 0; beat < cfg.n_beats; ++beat) {
    const double offset = static_cast<double>(beat) * cfg.beat_period;
    for (const auto* c : components(cfg)) {
      const double center = c->center + offset;
      const auto lo = static_cast<Eigen::Index>(
          std::floor((center - 10.0 * c->sigma) * cfg.fs));
      const auto hi = static_cast<Eigen::Index>(
          std::ceil((center + 10.0 * c->sigma) * cfg.fs));
      for (Eigen::Index i = std::max<Eigen::Index>(lo, 0);
           i <= std::min(hi, total - 1); ++i) {
        const double t = static_cast<double>(i) / cfg.fs;
        const double d = t - center;
        samples[i] +=
            c->amplitude * std::exp(-d * d / (2.0 * c->sigma * c->sigma));
      }
    }
  }

  // Labels: low priority first, higher priority overwrites (QRS > P > T).
  const auto paint = [&](const GaussianComponent& c, WaveClass cls) {
    for (int beat = 0; beat < cfg.n_beats; ++beat) {
      const double center = c.center + static_cast<double>(beat) * cfg.beat_period;
      for (Eigen::Index i = 0; i < total; ++i) {
        const double t = static_cast<double>(i) / cfg.fs;
        if (std::abs(t - center) <= 3.0 * c.sigma)
          mask.classes[static_cast<std::size_t>(i)] = cls;
      }
    }
  };
  paint(cfg.t, WaveClass::T);
  paint(cfg.p, WaveClass::P);
  paint(cfg.q, WaveClass::Qrs);
  paint(cfg.r, WaveClass::Qrs);
  paint(cfg.s, WaveClass::Qrs);

  if (cfg.noise_std > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    for (Eigen::Index i = 0; i < total; ++i) samples[i] += noise(rng);
  }

  return {{std::move(samples), cfg.fs}, std::move(mask)};
}

SpectrumCheck validate_spectrum(const SampledSignal& synth,
                                const Spectrum& reference, double threshold) {
  if (synth.fs != reference.fs)
    throw ResolutionMismatch("signal fs " + std::to_string(synth.fs) +
                             " != reference fs " +
                             std::to_string(reference.fs));
  const double score =
      spectral_similarity(dft(synth, reference.n_fft), reference);
  return {score >= threshold, score};
}

namespace {

double score_config(const GaussianBeatConfig& cfg, const Spectrum& reference) {
  return validate_spectrum(synth_beat(cfg).signal, reference, 0.0).score;
}

bool is_valid(const GaussianBeatConfig& cfg) {
  try {
    validate(cfg);
    return true;
  } catch (const ConfigInvalid&) {
    return false;
  }
}

}  // namespace

AdjustOutcome adjust_search(const GaussianBeatConfig& config,
                            const Spectrum& reference, double threshold,
                            int max_iters) {
  if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
  validate(config);

  AdjustOutcome out{config, score_config(config, reference), 0, false};
  if (out.score >= threshold) {
    out.accepted = true;
    return out;
  }

  GaussianComponent GaussianBeatConfig::*fields[] = {
      &GaussianBeatConfig::p, &GaussianBeatConfig::q, &GaussianBeatConfig::r,
      &GaussianBeatConfig::s, &GaussianBeatConfig::t};

  for (int iter = 1; iter <= max_iters; ++iter) {
    GaussianBeatConfig best_cfg = out.config;
    double best_score = out.score;

    const auto consider = [&](const GaussianBeatConfig& candidate) {
      if (!is_valid(candidate)) return;
      const double s = score_config(candidate, reference);
      if (s > best_score) {
        best_score = s;
        best_cfg = candidate;
      }
    };

    for (auto field : fields) {
      for (const double f : {0.9, 1.1}) {
        GaussianBeatConfig candidate = out.config;
        (candidate.*field).sigma *= f;
        consider(candidate);
      }
      for (const double f : {0.95, 1.05}) {
        GaussianBeatConfig candidate = out.config;
        (candidate.*field).amplitude *= f;  // scales |A|, sign preserved
        consider(candidate);
      }
    }

    if (best_score <= out.score) break;  // stuck; further iterations are no-ops
    out.config = best_cfg;
    out.score = best_score;
    out.iterations = iter;
    if (out.score >= threshold) {
      out.accepted = true;
      return out;
    }
  }
  return out;
}

AdjustOutcome adjust_until_valid(const GaussianBeatConfig& config,
                                 const Spectrum& reference, double threshold,
                                 int max_iters) {
  AdjustOutcome out = adjust_search(config, reference, threshold, max_iters);
  if (!out.accepted)
    throw NotConverged("no config reached similarity " +
                           std::to_string(threshold) + " within " +
                           std::to_string(max_iters) + " iterations (best " +
                           std::to_string(out.score) + ")",
                       out.score);
  return out;
}

}  // namespace ecg
