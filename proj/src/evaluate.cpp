#include "ecg/evaluate.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "ecg/errors.hpp"

namespace ecg {

CrossCorrelation cross_correlation(const Eigen::ArrayXd& x,
                                   const Eigen::ArrayXd& y, int max_lag) {
  if (x.size() == 0 || y.size() == 0)
    throw EmptyInput("cross-correlation needs non-empty sequences");
  if (max_lag < 0 || max_lag >= x.size())
    throw InvalidArgument("max_lag must satisfy 0 <= max_lag < len(x)");

  CrossCorrelation cc;
  cc.max_lag = max_lag;
  cc.raw.setZero(2 * max_lag + 1);
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t < x.size(); ++t) {
      const Eigen::Index j = t - lag;
      if (j >= 0 && j < y.size()) acc += x[t] * y[j];
    }
    cc.raw[lag + max_lag] = acc;
  }
  const double denom =
      std::sqrt(x.square().sum()) * std::sqrt(y.square().sum());
  // An all-zero input has no direction to correlate with; define its
  // normalized correlation as zero.
  cc.normalized = denom > 0.0 ? (cc.raw / denom).eval()
                              : Eigen::ArrayXd::Zero(cc.raw.size()).eval();
  return cc;
}

std::map<WaveClass, Eigen::ArrayXd> wave_templates(
    const GaussianBeatConfig& config) {
  GaussianBeatConfig proto = config;
  proto.noise_std = 0.0;
  proto.n_beats = 1;
  const BeatRecord beat = synth_beat(proto);

  std::map<WaveClass, Eigen::ArrayXd> templates;
  for (const MaskRun& run : mask_runs(beat.mask)) {
    if (templates.count(run.cls)) continue;  // first occurrence wins
    templates.emplace(
        run.cls, beat.signal.samples.segment(run.begin, run.end - run.begin));
  }
  return templates;
}

namespace {

Eigen::ArrayXd resample_linear(const Eigen::ArrayXd& src, Eigen::Index m) {
  Eigen::ArrayXd out(m);
  if (src.size() == 1) {
    out.setConstant(src[0]);
    return out;
  }
  const double stride =
      static_cast<double>(src.size() - 1) / static_cast<double>(m - 1);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double pos = static_cast<double>(j) * stride;
    const auto i0 = static_cast<Eigen::Index>(std::floor(pos));
    const Eigen::Index i1 = std::min(i0 + 1, src.size() - 1);
    const double frac = pos - static_cast<double>(i0);
    out[j] = src[i0] * (1.0 - frac) + src[i1] * frac;
  }
  return out;
}

}  // namespace

SegmentClassification classify_segment(
    const Eigen::ArrayXd& segment,
    const std::map<WaveClass, Eigen::ArrayXd>& templates) {
  if (segment.size() < 3)
    throw SegmentTooShort("segment of " + std::to_string(segment.size()) +
                          " samples cannot be classified");
  if (templates.empty()) throw EmptyInput("no templates supplied");

  const int max_lag = std::max<int>(
      1, static_cast<int>(std::llround(0.1 * static_cast<double>(segment.size()))));

  SegmentClassification best;
  best.score = -2.0;
  for (const WaveClass cls : {WaveClass::P, WaveClass::Qrs, WaveClass::T}) {
    const auto it = templates.find(cls);
    if (it == templates.end()) continue;
    const Eigen::ArrayXd resampled =
        resample_linear(it->second, segment.size());
    const CrossCorrelation cc =
        cross_correlation(resampled, segment, max_lag);
    const double peak = cc.normalized.maxCoeff();
    if (peak > best.score) {  // strict: earlier class wins ties
      best.score = peak;
      best.cls = cls;
    }
  }
  return best;
}

SegMetrics segmentation_metrics(std::span<const std::uint8_t> pred,
                                std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size())
    throw LengthMismatch("prediction length " + std::to_string(pred.size()) +
                         " != truth length " + std::to_string(truth.size()));
  if (pred.empty()) throw EmptyInput("metrics over empty masks");

  std::size_t tp = 0, fp = 0, fn = 0, matches = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool t = truth[i] != 0;
    matches += p == t;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }

  SegMetrics m;
  m.accuracy = static_cast<double>(matches) / static_cast<double>(pred.size());
  const std::size_t uni = tp + fp + fn;
  m.iou = uni == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(uni);
  const std::size_t f1_denom = 2 * tp + fp + fn;
  m.f1 = f1_denom == 0
             ? 1.0
             : 2.0 * static_cast<double>(tp) / static_cast<double>(f1_denom);
  return m;
}

template <typename Scalar>
double time_inference(const ModelParams<Scalar>& params,
                      const SampledSignal& signal, int repeats) {
  if (repeats < 3) throw InvalidArgument("timing needs at least 3 repeats");

  using Clock = std::chrono::steady_clock;
  volatile Scalar sink = 0;

  const auto run_once = [&]() {
    const MatrixX<Scalar> logits =
        model_forward(params, signal, BatchNormMode::Eval);
    sink = sink + logits(0, 0);
  };

  run_once();  // warm-up, untimed
  std::vector<double> times_ms;
  times_ms.reserve(static_cast<std::size_t>(repeats));
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = Clock::now();
    run_once();
    const auto t1 = Clock::now();
    times_ms.push_back(
        std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times_ms.begin(), times_ms.end());
  const std::size_t n = times_ms.size();
  return n % 2 == 1 ? times_ms[n / 2]
                    : 0.5 * (times_ms[n / 2 - 1] + times_ms[n / 2]);
}

template double time_inference<float>(const ModelParams<float>&,
                                      const SampledSignal&, int);
template double time_inference<double>(const ModelParams<double>&,
                                       const SampledSignal&, int);

namespace {

// Regularized incomplete beta function via Lentz's continued fraction.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 200;
  constexpr double kEps = 3e-14;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double betai(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log(1.0 - x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double paired_t_pvalue(const std::vector<double>& a,
                       const std::vector<double>& b) {
  if (a.size() != b.size())
    throw LengthMismatch("paired samples must have equal size");
  const std::size_t n = a.size();
  if (n < 2) throw InsufficientSeeds("paired t-test needs at least 2 pairs");

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) return mean == 0.0 ? 1.0 : 0.0;

  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const double dof = static_cast<double>(n - 1);
  return betai(dof / 2.0, 0.5, dof / (dof + t * t));
}

std::string host_descriptor() {
  utsname info{};
  if (uname(&info) != 0) return "unknown host";
  return std::string(info.sysname) + " " + info.release + " " + info.machine;
}

// ---------------------------------------------------------------------------
// Preprocessing comparison harness
// ---------------------------------------------------------------------------

namespace {

struct PreparedMethod {
  std::vector<SampledSignal> signals;  // transformed + normalized
  double transform_ms = 0.0;           // median per-record transform time
};

PreparedMethod prepare_method(const std::vector<BeatRecord>& corpus,
                              Preprocessing method,
                              const TransformParams& params) {
  PreparedMethod out;
  out.signals.reserve(corpus.size());
  std::vector<double> times;
  times.reserve(corpus.size());
  for (const BeatRecord& record : corpus) {
    const auto t0 = std::chrono::steady_clock::now();
    SampledSignal transformed =
        apply_preprocessing(record.signal, method, params);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(
        std::chrono::duration<double, std::milli>(t1 - t0).count());
    out.signals.push_back(normalize(transformed));
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  out.transform_ms =
      n % 2 == 1 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  return out;
}

Example<float> make_example(const SampledSignal& signal, const LabelMask& mask,
                            WaveClass wave) {
  Example<float> ex;
  ex.input.resize(1, signal.size());
  for (Eigen::Index i = 0; i < signal.size(); ++i)
    ex.input(0, i) = static_cast<float>(signal.samples[i]);
  ex.target = binary_target(mask, wave);
  return ex;
}

SegMetrics concat_metrics(const std::vector<std::vector<std::uint8_t>>& preds,
                          const std::vector<std::vector<std::uint8_t>>& truths) {
  std::vector<std::uint8_t> pred_all, truth_all;
  for (const auto& p : preds) pred_all.insert(pred_all.end(), p.begin(), p.end());
  for (const auto& t : truths)
    truth_all.insert(truth_all.end(), t.begin(), t.end());
  return segmentation_metrics(pred_all, truth_all);
}

}  // namespace

EvalReport compare_preprocessing(const std::vector<BeatRecord>& corpus,
                                 const CompareOptions& options) {
  if (corpus.size() < 2)
    throw InvalidArgument("comparison needs at least 2 records for a split");
  if (options.seeds < 3)
    throw InsufficientSeeds("need >= 3 seeds for significance testing, got " +
                            std::to_string(options.seeds));
  if (options.methods.empty() || options.waves.empty())
    throw InvalidArgument("need at least one method and one wave");

  // 80/20 split by record, seeded shuffle.
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 split_rng(options.base_seed);
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(0.8 * static_cast<double>(corpus.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, corpus.size() - 1);
  std::vector<std::size_t> train_idx(order.begin(),
                                     order.begin() + static_cast<long>(n_train));
  std::vector<std::size_t> test_idx(order.begin() + static_cast<long>(n_train),
                                    order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  std::map<Preprocessing, PreparedMethod> prepared;
  for (const Preprocessing method : options.methods)
    prepared.emplace(method,
                     prepare_method(corpus, method, options.transform));

  struct Task {
    Preprocessing method;
    WaveClass wave;
    int seed_index;
  };
  std::vector<Task> tasks;
  for (const Preprocessing method : options.methods)
    for (const WaveClass wave : options.waves)
      for (int s = 0; s < options.seeds; ++s) tasks.push_back({method, wave, s});

  EvalReport report;
  report.runs.resize(tasks.size());
  report.host = host_descriptor();

  const auto run_task = [&](std::size_t task_index) {
    const Task& task = tasks[task_index];
    const PreparedMethod& prep = prepared.at(task.method);

    std::vector<Example<float>> train_set;
    train_set.reserve(train_idx.size());
    for (const std::size_t i : train_idx)
      train_set.push_back(
          make_example(prep.signals[i], corpus[i].mask, task.wave));

    TrainConfig cfg;
    cfg.learning_rate = options.learning_rate;
    cfg.epochs = options.epochs;
    cfg.batch_size = options.batch_size;
    cfg.seed = options.base_seed + static_cast<std::uint64_t>(task.seed_index);
    cfg.target_wave = task.wave;
    cfg.preprocessing = task.method;

    const TrainResult<float> trained =
        train<float>(cfg, Arch::table1(), train_set);

    RunResult run;
    run.method = task.method;
    run.wave = task.wave;
    run.seed = cfg.seed;
    run.loss_curve = trained.loss_curve;
    run.transform_ms = prep.transform_ms;
    run.transform_params =
        describe_transform(task.method, options.transform, corpus[0].signal.fs);

    std::vector<std::vector<std::uint8_t>> preds, truths;
    for (const std::size_t i : train_idx) {
      preds.push_back(predict_binary(trained.params, prep.signals[i]));
      truths.push_back(binary_target(corpus[i].mask, task.wave));
    }
    run.train_accuracy = concat_metrics(preds, truths).accuracy;

    preds.clear();
    truths.clear();
    std::vector<Example<float>> test_set;
    for (const std::size_t i : test_idx) {
      preds.push_back(predict_binary(trained.params, prep.signals[i]));
      truths.push_back(binary_target(corpus[i].mask, task.wave));
      test_set.push_back(
          make_example(prep.signals[i], corpus[i].mask, task.wave));
    }
    run.test = concat_metrics(preds, truths);
    run.test_loss = eval_loss(trained.params, test_set);
    run.inference_ms = time_inference(
        trained.params, prep.signals[test_idx.front()], options.timing_repeats);

    report.runs[task_index] = std::move(run);
  };

  if (options.jobs <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
  } else {
    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        run_task(i);
      }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min<int>(options.jobs,
                                        static_cast<int>(tasks.size()));
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  // Aggregates and significance vs the raw branch, paired by seed index.
  const bool have_raw =
      std::find(options.methods.begin(), options.methods.end(),
                Preprocessing::Raw) != options.methods.end();
  for (const Preprocessing method : options.methods) {
    for (const WaveClass wave : options.waves) {
      Aggregate agg;
      agg.method = method;
      agg.wave = wave;
      std::vector<double> accs, raw_accs;
      for (const RunResult& run : report.runs) {
        if (run.wave != wave) continue;
        if (run.method == method) {
          agg.train_accuracy += run.train_accuracy;
          agg.test.accuracy += run.test.accuracy;
          agg.test.iou += run.test.iou;
          agg.test.f1 += run.test.f1;
          agg.test_loss += run.test_loss;
          agg.inference_ms += run.inference_ms;
          agg.transform_ms += run.transform_ms;
          agg.transform_params = run.transform_params;
          accs.push_back(run.test.accuracy);
        }
        if (run.method == Preprocessing::Raw)
          raw_accs.push_back(run.test.accuracy);
      }
      const auto n = static_cast<double>(accs.size());
      agg.train_accuracy /= n;
      agg.test.accuracy /= n;
      agg.test.iou /= n;
      agg.test.f1 /= n;
      agg.test_loss /= n;
      agg.inference_ms /= n;
      agg.transform_ms /= n;
      if (have_raw && method != Preprocessing::Raw)
        agg.p_value_vs_raw = paired_t_pvalue(accs, raw_accs);
      report.aggregates.push_back(std::move(agg));
    }
  }

  // Per-wave spectra of the preprocessed test records (averaged per wave).
  for (const Preprocessing method : options.methods) {
    const PreparedMethod& prep = prepared.at(method);
    std::map<WaveClass, Eigen::ArrayXd> sums;
    std::map<WaveClass, int> counts;
    Spectrum shape;
    for (const std::size_t i : test_idx) {
      for (const auto& [cls, spec] :
           segment_spectra(prep.signals[i], corpus[i].mask, options.n_fft)) {
        auto [it, inserted] = sums.try_emplace(cls, spec.mags);
        if (!inserted) it->second += spec.mags;
        counts[cls] += 1;
        shape = spec;
      }
    }
    for (auto& [cls, mags] : sums) {
      Spectrum spec = shape;
      spec.mags = mags / static_cast<double>(counts[cls]);
      report.segment_spectra.emplace_back(method, cls, std::move(spec));
    }
  }

  std::ostringstream echo;
  echo << "methods=";
  for (std::size_t i = 0; i < options.methods.size(); ++i)
    echo << (i ? "," : "") << to_string(options.methods[i]);
  echo << ";waves=";
  for (std::size_t i = 0; i < options.waves.size(); ++i)
    echo << (i ? "," : "") << to_string(options.waves[i]);
  echo << ";seeds=" << options.seeds << ";base_seed=" << options.base_seed
       << ";lr=" << options.learning_rate << ";epochs=" << options.epochs
       << ";batch_size=" << options.batch_size << ";n_fft=" << options.n_fft
       << ";records=" << corpus.size() << ";train=" << train_idx.size()
       << ";test=" << test_idx.size() << ";jobs=" << options.jobs;
  report.config_echo = echo.str();
  return report;
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_report_csv(const EvalReport& report,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out << "row_type,method,wave,seed,train_accuracy,test_accuracy,test_iou,"
         "test_f1,test_loss,inference_ms,transform_ms,transform_params,"
         "p_value_vs_raw,host\n";
  for (const RunResult& run : report.runs) {
    out << "run," << to_string(run.method) << ',' << to_string(run.wave) << ','
        << run.seed << ',' << fmt(run.train_accuracy) << ','
        << fmt(run.test.accuracy) << ',' << fmt(run.test.iou) << ','
        << fmt(run.test.f1) << ',' << fmt(run.test_loss) << ','
        << fmt(run.inference_ms) << ',' << fmt(run.transform_ms) << ','
        << run.transform_params << ",," << report.host << '\n';
  }
  for (const Aggregate& agg : report.aggregates) {
    out << "aggregate," << to_string(agg.method) << ',' << to_string(agg.wave)
        << ",," << fmt(agg.train_accuracy) << ',' << fmt(agg.test.accuracy)
        << ',' << fmt(agg.test.iou) << ',' << fmt(agg.test.f1) << ','
        << fmt(agg.test_loss) << ',' << fmt(agg.inference_ms) << ','
        << fmt(agg.transform_ms) << ',' << agg.transform_params << ','
        << (agg.p_value_vs_raw ? fmt(*agg.p_value_vs_raw) : std::string())
        << ',' << report.host << '\n';
  }
  if (!out) throw IoFailure("write failed for " + path.string());
}

void write_loss_curves_csv(const EvalReport& report,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out << "method,wave,seed,epoch,loss\n";
  for (const RunResult& run : report.runs)
    for (std::size_t epoch = 0; epoch < run.loss_curve.size(); ++epoch)
      out << to_string(run.method) << ',' << to_string(run.wave) << ','
          << run.seed << ',' << epoch << ',' << fmt(run.loss_curve[epoch])
          << '\n';
  if (!out) throw IoFailure("write failed for " + path.string());
}

void write_segment_spectra_csv(const EvalReport& report,
                               const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out << "method,wave,freq_hz,magnitude\n";
  for (const auto& [method, wave, spectrum] : report.segment_spectra)
    for (Eigen::Index k = 0; k < spectrum.freqs.size(); ++k)
      out << to_string(method) << ',' << to_string(wave) << ','
          << fmt(spectrum.freqs[k]) << ',' << fmt(spectrum.mags[k]) << '\n';
  if (!out) throw IoFailure("write failed for " + path.string());
}

}  // namespace ecg
