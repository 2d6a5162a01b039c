// ecgseg: synthetic PQRST generation, physics-based preprocessing, spectral
// analysis, ConvBiLSTM training and the preprocessing comparison report, as
// one subcommand-style binary with seeded, replayable runs.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ecg/checkpoint.hpp"
#include "ecg/errors.hpp"
#include "ecg/evaluate.hpp"
#include "ecg/ingest.hpp"
#include "ecg/manifest.hpp"
#include "ecg/neural.hpp"
#include "ecg/signal.hpp"
#include "ecg/spectral.hpp"
#include "ecg/synth.hpp"
#include "ecg/transforms.hpp"

namespace fs = std::filesystem;
using namespace ecg;

namespace {

std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

Preprocessing parse_method(const std::string& text) {
  const auto method = preprocessing_from_string(text);
  if (!method)
    throw InvalidArgument("unknown method '" + text +
                          "' (raw|hilbert|euler|gauss-legendre)");
  return *method;
}

WaveClass parse_wave(const std::string& text) {
  const auto wave = wave_class_from_string(text);
  if (!wave || *wave == WaveClass::Background)
    throw InvalidArgument("unknown wave '" + text + "' (P|QRS|T)");
  return *wave;
}

RunManifest manifest_base(const std::string& subcommand, std::uint64_t seed,
                          int argc, char** argv) {
  RunManifest manifest;
  manifest.subcommand = subcommand;
  manifest.seed = seed;
  manifest.host = host_descriptor();
  for (int i = 0; i < argc; ++i) manifest.argv.emplace_back(argv[i]);
  return manifest;
}

// Per-record dataset as the train/eval pipeline sees it.
std::vector<BeatRecord> load_directory(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw IoFailure("data directory " + dir.string() + " does not exist");
  std::vector<fs::path> signals;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".csv" &&
        fs::exists(entry.path().parent_path() /
                   (entry.path().stem().string() + ".json")))
      signals.push_back(entry.path());
  std::sort(signals.begin(), signals.end());
  if (signals.empty())
    throw IoFailure("no signal/annotation pairs (*.csv + *.json) in " +
                    dir.string());

  std::vector<BeatRecord> records;
  records.reserve(signals.size());
  for (const fs::path& signal_path : signals) {
    const fs::path ann_path =
        signal_path.parent_path() / (signal_path.stem().string() + ".json");
    auto [signal, annotations] = load_record(signal_path, ann_path);
    LabelMask mask = rasterize(annotations, signal.fs, signal.size());
    records.push_back({std::move(signal), std::move(mask)});
  }
  return records;
}

SampledSignal preprocess_for_model(const SampledSignal& signal,
                                   Preprocessing method,
                                   const TransformParams& params) {
  return normalize(apply_preprocessing(signal, method, params));
}

struct SynthOptions {
  fs::path out;
  int records = 1;
  int beats = 4;
  std::uint64_t seed = 0;
  double fs = kDefaultSampleRate;
  double noise_std = 0.0;
  double beat_period = 0.8;
  double amp[5] = {0.15, -0.1, 1.0, -0.2, 0.3};
  double center[5] = {0.10, 0.19, 0.21, 0.23, 0.40};
  double sigma[5] = {0.020, 0.008, 0.010, 0.008, 0.035};
  std::string match_spectrum;
  double threshold = 0.9;
  int max_iters = 20;
  int n_fft = kDefaultFftWindow;
};

GaussianBeatConfig to_config(const SynthOptions& opt) {
  GaussianBeatConfig cfg;
  GaussianComponent* comps[5] = {&cfg.p, &cfg.q, &cfg.r, &cfg.s, &cfg.t};
  for (int i = 0; i < 5; ++i)
    *comps[i] = {opt.amp[i], opt.center[i], opt.sigma[i]};
  cfg.beat_period = opt.beat_period;
  cfg.n_beats = opt.beats;
  cfg.fs = opt.fs;
  cfg.noise_std = opt.noise_std;
  cfg.seed = opt.seed;
  return cfg;
}

int run_synth(const SynthOptions& opt, int argc, char** argv) {
  fs::create_directories(opt.out);
  GaussianBeatConfig base = to_config(opt);

  RunManifest manifest = manifest_base("synth", opt.seed, argc, argv);
  manifest.config = {{"out", opt.out.string()},
                     {"records", std::to_string(opt.records)},
                     {"beats", std::to_string(opt.beats)},
                     {"seed", std::to_string(opt.seed)},
                     {"fs", fmt_num(opt.fs)},
                     {"noise-std", fmt_num(opt.noise_std)},
                     {"beat-period", fmt_num(opt.beat_period)},
                     {"threshold", fmt_num(opt.threshold)},
                     {"max-iters", std::to_string(opt.max_iters)},
                     {"n-fft", std::to_string(opt.n_fft)},
                     {"match-spectrum", opt.match_spectrum}};
  const char* names[5] = {"p", "q", "r", "s", "t"};
  for (int i = 0; i < 5; ++i) {
    manifest.config[std::string(names[i]) + "-amp"] = fmt_num(opt.amp[i]);
    manifest.config[std::string(names[i]) + "-center"] = fmt_num(opt.center[i]);
    manifest.config[std::string(names[i]) + "-sigma"] = fmt_num(opt.sigma[i]);
  }

  if (!opt.match_spectrum.empty()) {
    const SampledSignal reference_signal = read_signal_csv(opt.match_spectrum);
    const Spectrum reference = dft(reference_signal, opt.n_fft);
    const AdjustOutcome outcome =
        adjust_until_valid(base, reference, opt.threshold, opt.max_iters);
    base = outcome.config;
    manifest.inputs.push_back(opt.match_spectrum);
    manifest.config["match-score"] = fmt_num(outcome.score);
    manifest.config["match-iterations"] = std::to_string(outcome.iterations);
  }

  for (int i = 0; i < opt.records; ++i) {
    GaussianBeatConfig cfg = base;
    cfg.seed = opt.seed + static_cast<std::uint64_t>(i);
    const BeatRecord record = synth_beat(cfg);

    char stem[32];
    std::snprintf(stem, sizeof(stem), "record_%04d", i);
    const fs::path signal_path = opt.out / (std::string(stem) + ".csv");
    const fs::path ann_path = opt.out / (std::string(stem) + ".json");
    write_signal_csv(record.signal, signal_path);
    AnnotationSet annotations = spans_from_mask(record.mask, cfg.fs);
    annotations.source = "ecgseg synth seed=" + std::to_string(cfg.seed);
    write_annotations_json(annotations, ann_path);
    manifest.outputs.push_back(signal_path.string());
    manifest.outputs.push_back(ann_path.string());
  }

  write_manifest(manifest, opt.out / "manifest.json");
  return 0;
}

struct PreprocessOptions {
  fs::path in, out;
  std::string method = "raw";
  double dt = kDefaultEulerDt;
  int gl_nodes = kDefaultGlNodes;
  double window = kDefaultGlWindow;
  bool do_bandpass = false;
  double band_lo = kDefaultBandLow;
  double band_hi = kDefaultBandHigh;
  bool do_normalize = false;
  double downsample_to = 250.0;  // 0 = off
  std::uint64_t seed = 0;
};

int run_preprocess(const PreprocessOptions& opt, int argc, char** argv) {
  SampledSignal signal = read_signal_csv(opt.in);
  if (opt.do_bandpass) signal = bandpass(signal, opt.band_lo, opt.band_hi);
  // Rate matching: only decimate when the record is not already at the
  // target rate; band-limit below target/2 first (--bandpass).
  if (opt.downsample_to > 0.0 && signal.fs != opt.downsample_to)
    signal = downsample(signal, opt.downsample_to);
  if (opt.do_normalize) signal = normalize(signal);

  const Preprocessing method = parse_method(opt.method);
  TransformParams params{opt.dt, opt.gl_nodes, opt.window};
  signal = apply_preprocessing(signal, method, params);
  write_signal_csv(signal, opt.out);

  RunManifest manifest = manifest_base("preprocess", opt.seed, argc, argv);
  manifest.inputs.push_back(opt.in.string());
  manifest.outputs.push_back(opt.out.string());
  manifest.config = {
      {"in", opt.in.string()},
      {"out", opt.out.string()},
      {"method", opt.method},
      {"dt", fmt_num(opt.dt)},
      {"gl-nodes", std::to_string(opt.gl_nodes)},
      {"window", fmt_num(opt.window)},
      {"bandpass", opt.do_bandpass ? "true" : "false"},
      {"band-lo", fmt_num(opt.band_lo)},
      {"band-hi", fmt_num(opt.band_hi)},
      {"normalize", opt.do_normalize ? "true" : "false"},
      {"downsample-to", fmt_num(opt.downsample_to)},
      {"seed", std::to_string(opt.seed)},
      {"effective-params", describe_transform(method, params, signal.fs)}};
  write_manifest(manifest, fs::path(opt.out.string() + ".manifest.json"));
  return 0;
}

struct FftOptions {
  fs::path in, out;
  std::string annotations;
  std::string segments_out;
  int n_fft = kDefaultFftWindow;
  std::uint64_t seed = 0;
};

int run_fft(const FftOptions& opt, int argc, char** argv) {
  const SampledSignal signal = read_signal_csv(opt.in);
  const Spectrum spectrum = dft(signal, opt.n_fft);
  write_spectrum_csv(spectrum, opt.out);

  RunManifest manifest = manifest_base("fft", opt.seed, argc, argv);
  manifest.inputs.push_back(opt.in.string());
  manifest.outputs.push_back(opt.out.string());
  manifest.config = {{"in", opt.in.string()},
                     {"out", opt.out.string()},
                     {"n-fft", std::to_string(opt.n_fft)},
                     {"annotations", opt.annotations},
                     {"segments-out", opt.segments_out},
                     {"seed", std::to_string(opt.seed)}};

  if (!opt.annotations.empty()) {
    if (opt.segments_out.empty())
      throw InvalidArgument("--annotations requires --segments-out");
    const AnnotationSet annotations = read_annotations_json(opt.annotations);
    const LabelMask mask = rasterize(annotations, signal.fs, signal.size());
    const auto spectra = segment_spectra(signal, mask, opt.n_fft);

    std::ofstream out(opt.segments_out);
    if (!out) throw IoFailure("cannot open " + opt.segments_out);
    out << "wave,freq_hz,magnitude\n";
    for (const auto& [cls, spec] : spectra)
      for (Eigen::Index k = 0; k < spec.freqs.size(); ++k)
        out << to_string(cls) << ',' << spec.freqs[k] << ',' << spec.mags[k]
            << '\n';
    manifest.inputs.push_back(opt.annotations);
    manifest.outputs.push_back(opt.segments_out);
  }

  write_manifest(manifest, fs::path(opt.out.string() + ".manifest.json"));
  return 0;
}

struct TrainOptions {
  fs::path data, out;
  std::string wave = "QRS";
  std::string method = "raw";
  double lr = 1e-3;
  int epochs = 10;
  int batch_size = 8;
  std::uint64_t seed = 0;
  std::string precision = "double";
  double dt = kDefaultEulerDt;
  int gl_nodes = kDefaultGlNodes;
  double window = kDefaultGlWindow;
};

template <typename Scalar>
void train_and_save(const TrainOptions& opt, const TrainConfig& cfg,
                    const std::vector<BeatRecord>& records,
                    const TransformParams& params, RunManifest& manifest) {
  std::vector<Example<Scalar>> dataset;
  dataset.reserve(records.size());
  for (const BeatRecord& record : records) {
    const SampledSignal prepped =
        preprocess_for_model(record.signal, cfg.preprocessing, params);
    Example<Scalar> ex;
    ex.input.resize(1, prepped.size());
    for (Eigen::Index i = 0; i < prepped.size(); ++i)
      ex.input(0, i) = static_cast<Scalar>(prepped.samples[i]);
    ex.target = binary_target(record.mask, cfg.target_wave);
    dataset.push_back(std::move(ex));
  }

  const TrainResult<Scalar> result = train<Scalar>(cfg, Arch::table1(), dataset);

  const fs::path ckpt_path = opt.out / "model.ckpt";
  save_checkpoint(result.params.template cast<double>(), ckpt_path);

  const fs::path curve_path = opt.out / "loss_curve.csv";
  std::ofstream curve(curve_path);
  if (!curve) throw IoFailure("cannot open " + curve_path.string());
  curve << "epoch,loss\n";
  for (std::size_t e = 0; e < result.loss_curve.size(); ++e)
    curve << e << ',' << result.loss_curve[e] << '\n';

  manifest.outputs.push_back(ckpt_path.string());
  manifest.outputs.push_back(curve_path.string());
  manifest.config["final-loss"] = fmt_num(result.loss_curve.back());
}

int run_train(const TrainOptions& opt, int argc, char** argv) {
  fs::create_directories(opt.out);
  const std::vector<BeatRecord> records = load_directory(opt.data);

  TrainConfig cfg;
  cfg.learning_rate = opt.lr;
  cfg.epochs = opt.epochs;
  cfg.batch_size = opt.batch_size;
  cfg.seed = opt.seed;
  cfg.target_wave = parse_wave(opt.wave);
  cfg.preprocessing = parse_method(opt.method);
  const TransformParams params{opt.dt, opt.gl_nodes, opt.window};

  RunManifest manifest = manifest_base("train", opt.seed, argc, argv);
  manifest.inputs.push_back(opt.data.string());
  manifest.config = {
      {"data", opt.data.string()},
      {"out", opt.out.string()},
      {"wave", opt.wave},
      {"method", opt.method},
      {"lr", fmt_num(opt.lr)},
      {"epochs", std::to_string(opt.epochs)},
      {"batch-size", std::to_string(opt.batch_size)},
      {"seed", std::to_string(opt.seed)},
      {"precision", opt.precision},
      {"dt", fmt_num(opt.dt)},
      {"gl-nodes", std::to_string(opt.gl_nodes)},
      {"window", fmt_num(opt.window)},
      {"records", std::to_string(records.size())},
      {"effective-params",
       describe_transform(cfg.preprocessing, params, records[0].signal.fs)}};

  if (opt.precision == "float")
    train_and_save<float>(opt, cfg, records, params, manifest);
  else if (opt.precision == "double")
    train_and_save<double>(opt, cfg, records, params, manifest);
  else
    throw InvalidArgument("--precision must be float or double");

  write_manifest(manifest, opt.out / "manifest.json");
  return 0;
}

struct EvalOptions {
  fs::path model, signal, annotations, out;
  std::string wave = "QRS";
  std::string method = "raw";
  bool classify = false;
  int repeats = 5;
  std::uint64_t seed = 0;
  double dt = kDefaultEulerDt;
  int gl_nodes = kDefaultGlNodes;
  double window = kDefaultGlWindow;
};

int run_eval(const EvalOptions& opt, int argc, char** argv) {
  fs::create_directories(opt.out);
  const ModelParams<double> params = load_checkpoint(opt.model);
  auto [signal, annotations] = load_record(opt.signal, opt.annotations);
  const LabelMask mask = rasterize(annotations, signal.fs, signal.size());

  const WaveClass wave = parse_wave(opt.wave);
  const Preprocessing method = parse_method(opt.method);
  const TransformParams tparams{opt.dt, opt.gl_nodes, opt.window};
  const SampledSignal prepped = preprocess_for_model(signal, method, tparams);

  const std::vector<std::uint8_t> pred = predict_binary(params, prepped);
  const std::vector<std::uint8_t> truth = binary_target(mask, wave);
  const SegMetrics metrics = segmentation_metrics(pred, truth);

  std::vector<Example<double>> batch(1);
  batch[0].input.resize(1, prepped.size());
  for (Eigen::Index i = 0; i < prepped.size(); ++i)
    batch[0].input(0, i) = prepped.samples[i];
  batch[0].target = truth;
  const double loss = eval_loss(params, batch);
  const double ms = time_inference(params, prepped, opt.repeats);

  const fs::path metrics_path = opt.out / "metrics.csv";
  {
    std::ofstream out(metrics_path);
    if (!out) throw IoFailure("cannot open " + metrics_path.string());
    out << "wave,method,accuracy,iou,f1,loss,inference_ms,transform_params,"
           "host\n";
    out << opt.wave << ',' << opt.method << ',' << metrics.accuracy << ','
        << metrics.iou << ',' << metrics.f1 << ',' << loss << ',' << ms << ','
        << describe_transform(method, tparams, signal.fs) << ','
        << host_descriptor() << '\n';
  }

  const fs::path pred_path = opt.out / "predicted_mask.csv";
  {
    LabelMask pred_mask;
    pred_mask.classes.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
      pred_mask.classes[i] = pred[i] ? wave : WaveClass::Background;
    export_mask(pred_mask, pred_path);
  }

  RunManifest manifest = manifest_base("eval", opt.seed, argc, argv);
  manifest.inputs = {opt.model.string(), opt.signal.string(),
                     opt.annotations.string()};
  manifest.outputs = {metrics_path.string(), pred_path.string()};
  manifest.config = {{"model", opt.model.string()},
                     {"signal", opt.signal.string()},
                     {"annotations", opt.annotations.string()},
                     {"out", opt.out.string()},
                     {"wave", opt.wave},
                     {"method", opt.method},
                     {"classify", opt.classify ? "true" : "false"},
                     {"repeats", std::to_string(opt.repeats)},
                     {"seed", std::to_string(opt.seed)},
                     {"dt", fmt_num(opt.dt)},
                     {"gl-nodes", std::to_string(opt.gl_nodes)},
                     {"window", fmt_num(opt.window)}};

  if (opt.classify) {
    const auto templates = wave_templates(default_beat_config());
    const fs::path seg_path = opt.out / "segments.csv";
    std::ofstream out(seg_path);
    if (!out) throw IoFailure("cannot open " + seg_path.string());
    out << "source,begin,end,true_class,assigned_class,score\n";
    for (const MaskRun& run : mask_runs(mask)) {
      const Eigen::ArrayXd segment =
          signal.samples.segment(run.begin, run.end - run.begin);
      const SegmentClassification cls = classify_segment(segment, templates);
      out << "truth," << run.begin << ',' << run.end << ','
          << to_string(run.cls) << ',' << to_string(cls.cls) << ','
          << cls.score << '\n';
    }
    LabelMask pred_mask;
    pred_mask.classes.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
      pred_mask.classes[i] = pred[i] ? wave : WaveClass::Background;
    for (const MaskRun& run : mask_runs(pred_mask)) {
      if (run.end - run.begin < 3) continue;  // too short to classify
      const Eigen::ArrayXd segment =
          signal.samples.segment(run.begin, run.end - run.begin);
      const SegmentClassification cls = classify_segment(segment, templates);
      out << "predicted," << run.begin << ',' << run.end << ','
          << to_string(wave) << ',' << to_string(cls.cls) << ',' << cls.score
          << '\n';
    }
    manifest.outputs.push_back(seg_path.string());
  }

  write_manifest(manifest, opt.out / "manifest.json");
  return 0;
}

struct CompareOptionsCli {
  fs::path out;
  std::string data;
  std::vector<std::string> methods = {"raw", "euler", "hilbert",
                                      "gauss-legendre"};
  std::vector<std::string> waves = {"P", "QRS", "T"};
  int seeds = 3;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  int epochs = 12;
  int batch_size = 8;
  int jobs = 1;
  int n_fft = kDefaultFftWindow;
  int beats = 200;
  int beats_per_record = 2;
  double noise_std = 0.05;
  double dt = kDefaultEulerDt;
  int gl_nodes = kDefaultGlNodes;
  double window = kDefaultGlWindow;
};

int run_compare(const CompareOptionsCli& opt, int argc, char** argv) {
  fs::create_directories(opt.out);

  std::vector<BeatRecord> corpus;
  if (!opt.data.empty()) {
    corpus = load_directory(opt.data);
  } else {
    // Seeded synthetic corpus: `beats` beats split into uniform records.
    GaussianBeatConfig cfg = default_beat_config();
    cfg.n_beats = opt.beats_per_record;
    cfg.noise_std = opt.noise_std;
    const int n_records =
        (opt.beats + opt.beats_per_record - 1) / opt.beats_per_record;
    for (int i = 0; i < n_records; ++i) {
      cfg.seed = opt.seed + static_cast<std::uint64_t>(i);
      corpus.push_back(synth_beat(cfg));
    }
  }

  CompareOptions options;
  options.methods.clear();
  for (const std::string& m : opt.methods)
    options.methods.push_back(parse_method(m));
  options.waves.clear();
  for (const std::string& w : opt.waves) options.waves.push_back(parse_wave(w));
  options.seeds = opt.seeds;
  options.base_seed = opt.seed;
  options.learning_rate = opt.lr;
  options.epochs = opt.epochs;
  options.batch_size = opt.batch_size;
  options.jobs = opt.jobs;
  options.n_fft = opt.n_fft;
  options.transform = {opt.dt, opt.gl_nodes, opt.window};

  const EvalReport report = compare_preprocessing(corpus, options);

  const fs::path report_path = opt.out / "report.csv";
  const fs::path curves_path = opt.out / "loss_curves.csv";
  const fs::path spectra_path = opt.out / "segment_spectra.csv";
  write_report_csv(report, report_path);
  write_loss_curves_csv(report, curves_path);
  write_segment_spectra_csv(report, spectra_path);

  RunManifest manifest = manifest_base("compare", opt.seed, argc, argv);
  if (!opt.data.empty()) manifest.inputs.push_back(opt.data);
  manifest.outputs = {report_path.string(), curves_path.string(),
                      spectra_path.string()};
  manifest.config = {{"out", opt.out.string()},
                     {"data", opt.data},
                     {"seeds", std::to_string(opt.seeds)},
                     {"seed", std::to_string(opt.seed)},
                     {"lr", fmt_num(opt.lr)},
                     {"epochs", std::to_string(opt.epochs)},
                     {"batch-size", std::to_string(opt.batch_size)},
                     {"jobs", std::to_string(opt.jobs)},
                     {"n-fft", std::to_string(opt.n_fft)},
                     {"beats", std::to_string(opt.beats)},
                     {"beats-per-record", std::to_string(opt.beats_per_record)},
                     {"noise-std", fmt_num(opt.noise_std)},
                     {"dt", fmt_num(opt.dt)},
                     {"gl-nodes", std::to_string(opt.gl_nodes)},
                     {"window", fmt_num(opt.window)},
                     {"config-echo", report.config_echo}};
  std::string methods_echo, waves_echo;
  for (const auto& m : opt.methods)
    methods_echo += (methods_echo.empty() ? "" : ",") + m;
  for (const auto& w : opt.waves)
    waves_echo += (waves_echo.empty() ? "" : ",") + w;
  manifest.config["methods"] = methods_echo;
  manifest.config["waves"] = waves_echo;
  write_manifest(manifest, opt.out / "manifest.json");
  return 0;
}

struct PlotDataOptions {
  fs::path signal, out;
  std::string annotations;
  int n_fft = kDefaultFftWindow;
  std::uint64_t seed = 0;
};

int run_plot_data(const PlotDataOptions& opt, int argc, char** argv) {
  fs::create_directories(opt.out);
  const SampledSignal signal = read_signal_csv(opt.signal);

  const fs::path series_path = opt.out / "time_series.csv";
  {
    std::ofstream out(series_path);
    if (!out) throw IoFailure("cannot open " + series_path.string());
    out << "index,time_s,value\n";
    for (Eigen::Index i = 0; i < signal.size(); ++i)
      out << i << ',' << static_cast<double>(i) / signal.fs << ','
          << signal.samples[i] << '\n';
  }

  const fs::path spectrum_path = opt.out / "spectrum.csv";
  write_spectrum_csv(dft(signal, opt.n_fft), spectrum_path);

  RunManifest manifest = manifest_base("plot-data", opt.seed, argc, argv);
  manifest.inputs.push_back(opt.signal.string());
  manifest.outputs = {series_path.string(), spectrum_path.string()};
  manifest.config = {{"signal", opt.signal.string()},
                     {"out", opt.out.string()},
                     {"annotations", opt.annotations},
                     {"n-fft", std::to_string(opt.n_fft)},
                     {"seed", std::to_string(opt.seed)}};

  if (!opt.annotations.empty()) {
    const AnnotationSet annotations = read_annotations_json(opt.annotations);
    const LabelMask mask = rasterize(annotations, signal.fs, signal.size());
    const fs::path mask_path = opt.out / "mask.csv";
    export_mask(mask, mask_path);

    const auto spectra = segment_spectra(signal, mask, opt.n_fft);
    const fs::path seg_path = opt.out / "segment_spectra.csv";
    std::ofstream out(seg_path);
    if (!out) throw IoFailure("cannot open " + seg_path.string());
    out << "wave,freq_hz,magnitude\n";
    for (const auto& [cls, spec] : spectra)
      for (Eigen::Index k = 0; k < spec.freqs.size(); ++k)
        out << to_string(cls) << ',' << spec.freqs[k] << ',' << spec.mags[k]
            << '\n';
    manifest.inputs.push_back(opt.annotations);
    manifest.outputs.push_back(mask_path.string());
    manifest.outputs.push_back(seg_path.string());
  }

  write_manifest(manifest, opt.out / "manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"physics-based ECG segmentation toolkit"};
  app.require_subcommand(1);

  SynthOptions synth_opt;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "generate Gaussian PQRST records");
  synth_cmd->add_option("--out", synth_opt.out, "output directory")
      ->envname("ECGSEG_OUT_DIR")
      ->required();
  synth_cmd->add_option("--records", synth_opt.records, "number of records")
      ->capture_default_str();
  synth_cmd->add_option("--beats", synth_opt.beats, "beats per record")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_opt.seed, "noise seed")
      ->capture_default_str();
  synth_cmd->add_option("--fs", synth_opt.fs, "sampling rate (Hz)")
      ->capture_default_str();
  synth_cmd->add_option("--noise-std", synth_opt.noise_std, "noise std (mV)")
      ->capture_default_str();
  synth_cmd
      ->add_option("--beat-period", synth_opt.beat_period, "beat period (s)")
      ->capture_default_str();
  const char* wave_names[5] = {"p", "q", "r", "s", "t"};
  for (int i = 0; i < 5; ++i) {
    const std::string w = wave_names[i];
    synth_cmd
        ->add_option("--" + w + "-amp", synth_opt.amp[i],
                     w + " amplitude (mV)")
        ->capture_default_str();
    synth_cmd
        ->add_option("--" + w + "-center", synth_opt.center[i],
                     w + " center (s)")
        ->capture_default_str();
    synth_cmd
        ->add_option("--" + w + "-sigma", synth_opt.sigma[i], w + " width (s)")
        ->capture_default_str();
  }
  synth_cmd
      ->add_option("--match-spectrum", synth_opt.match_spectrum,
                   "reference signal CSV for iterative spectral matching")
      ->capture_default_str();
  synth_cmd
      ->add_option("--threshold", synth_opt.threshold,
                   "spectral similarity acceptance threshold")
      ->capture_default_str();
  synth_cmd
      ->add_option("--max-iters", synth_opt.max_iters,
                   "adjustment iteration budget")
      ->capture_default_str();
  synth_cmd->add_option("--n-fft", synth_opt.n_fft, "FFT window (samples)")
      ->capture_default_str();

  PreprocessOptions pre_opt;
  CLI::App* pre_cmd = app.add_subcommand(
      "preprocess", "apply conditioning and one physics-based transform");
  pre_cmd->add_option("--in", pre_opt.in, "input signal CSV")->required();
  pre_cmd->add_option("--out", pre_opt.out, "output signal CSV")->required();
  pre_cmd
      ->add_option("--method", pre_opt.method,
                   "raw|hilbert|euler|gauss-legendre")
      ->capture_default_str();
  pre_cmd->add_option("--dt", pre_opt.dt, "euler step (s)")
      ->capture_default_str();
  pre_cmd->add_option("--gl-nodes", pre_opt.gl_nodes, "quadrature order")
      ->capture_default_str();
  pre_cmd->add_option("--window", pre_opt.window, "smoothing window (s)")
      ->capture_default_str();
  pre_cmd->add_flag("--bandpass", pre_opt.do_bandpass, "band-pass first")
      ->capture_default_str();
  pre_cmd->add_option("--band-lo", pre_opt.band_lo, "band low edge (Hz)")
      ->capture_default_str();
  pre_cmd->add_option("--band-hi", pre_opt.band_hi, "band high edge (Hz)")
      ->capture_default_str();
  pre_cmd->add_flag("--normalize", pre_opt.do_normalize, "z-normalize")
      ->capture_default_str();
  pre_cmd
      ->add_option("--downsample-to", pre_opt.downsample_to,
                   "match this rate in Hz when the input differs (0 = off; "
                   "band-limit below target/2 first)")
      ->capture_default_str();
  pre_cmd->add_option("--seed", pre_opt.seed, "recorded in the manifest")
      ->capture_default_str();

  FftOptions fft_opt;
  CLI::App* fft_cmd =
      app.add_subcommand("fft", "one-sided magnitude spectrum as CSV");
  fft_cmd->add_option("--in", fft_opt.in, "input signal CSV")->required();
  fft_cmd->add_option("--out", fft_opt.out, "output spectrum CSV")->required();
  fft_cmd->add_option("--n-fft", fft_opt.n_fft, "FFT window (samples)")
      ->capture_default_str();
  fft_cmd->add_option("--annotations", fft_opt.annotations,
                      "annotation JSON for per-wave spectra");
  fft_cmd->add_option("--segments-out", fft_opt.segments_out,
                      "per-wave spectra CSV path");
  fft_cmd->add_option("--seed", fft_opt.seed, "recorded in the manifest")
      ->capture_default_str();

  TrainOptions train_opt;
  CLI::App* train_cmd =
      app.add_subcommand("train", "train one per-wave segmentation model");
  train_cmd->add_option("--data", train_opt.data, "record directory")
      ->required();
  train_cmd->add_option("--out", train_opt.out, "output directory")
      ->envname("ECGSEG_OUT_DIR")
      ->required();
  train_cmd->add_option("--wave", train_opt.wave, "P|QRS|T")
      ->capture_default_str();
  train_cmd
      ->add_option("--method", train_opt.method,
                   "raw|hilbert|euler|gauss-legendre")
      ->capture_default_str();
  train_cmd->add_option("--lr", train_opt.lr, "learning rate")
      ->capture_default_str();
  train_cmd->add_option("--epochs", train_opt.epochs, "epochs")
      ->capture_default_str();
  train_cmd->add_option("--batch-size", train_opt.batch_size, "batch size")
      ->capture_default_str();
  train_cmd->add_option("--seed", train_opt.seed, "training seed")
      ->capture_default_str();
  train_cmd
      ->add_option("--precision", train_opt.precision,
                   "float|double compute precision")
      ->capture_default_str();
  train_cmd->add_option("--dt", train_opt.dt, "euler step (s)")
      ->capture_default_str();
  train_cmd->add_option("--gl-nodes", train_opt.gl_nodes, "quadrature order")
      ->capture_default_str();
  train_cmd->add_option("--window", train_opt.window, "smoothing window (s)")
      ->capture_default_str();

  EvalOptions eval_opt;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on one record");
  eval_cmd->add_option("--model", eval_opt.model, "checkpoint path")
      ->required();
  eval_cmd->add_option("--signal", eval_opt.signal, "signal CSV")->required();
  eval_cmd->add_option("--annotations", eval_opt.annotations,
                       "annotation JSON")
      ->required();
  eval_cmd->add_option("--out", eval_opt.out, "output directory")
      ->envname("ECGSEG_OUT_DIR")
      ->required();
  eval_cmd->add_option("--wave", eval_opt.wave, "P|QRS|T")
      ->capture_default_str();
  eval_cmd
      ->add_option("--method", eval_opt.method,
                   "raw|hilbert|euler|gauss-legendre")
      ->capture_default_str();
  eval_cmd->add_flag("--classify", eval_opt.classify,
                     "cross-correlation template classification");
  eval_cmd->add_option("--repeats", eval_opt.repeats, "timing repeats")
      ->capture_default_str();
  eval_cmd->add_option("--seed", eval_opt.seed, "recorded in the manifest")
      ->capture_default_str();
  eval_cmd->add_option("--dt", eval_opt.dt, "euler step (s)")
      ->capture_default_str();
  eval_cmd->add_option("--gl-nodes", eval_opt.gl_nodes, "quadrature order")
      ->capture_default_str();
  eval_cmd->add_option("--window", eval_opt.window, "smoothing window (s)")
      ->capture_default_str();

  CompareOptionsCli cmp_opt;
  CLI::App* cmp_cmd = app.add_subcommand(
      "compare", "preprocessing comparison report across methods and waves");
  cmp_cmd->add_option("--out", cmp_opt.out, "output directory")
      ->envname("ECGSEG_OUT_DIR")
      ->required();
  cmp_cmd->add_option("--data", cmp_opt.data,
                      "record directory (default: synthesize a corpus)");
  cmp_cmd->add_option("--methods", cmp_opt.methods, "comma-separated methods")
      ->delimiter(',')
      ->capture_default_str();
  cmp_cmd->add_option("--waves", cmp_opt.waves, "comma-separated waves")
      ->delimiter(',')
      ->capture_default_str();
  cmp_cmd->add_option("--seeds", cmp_opt.seeds, "seeds per method/wave pair")
      ->capture_default_str();
  cmp_cmd->add_option("--seed", cmp_opt.seed, "base seed")
      ->capture_default_str();
  cmp_cmd->add_option("--lr", cmp_opt.lr, "learning rate")
      ->capture_default_str();
  cmp_cmd->add_option("--epochs", cmp_opt.epochs, "epochs per run")
      ->capture_default_str();
  cmp_cmd->add_option("--batch-size", cmp_opt.batch_size, "batch size")
      ->capture_default_str();
  cmp_cmd->add_option("--jobs", cmp_opt.jobs, "parallel training jobs")
      ->capture_default_str();
  cmp_cmd->add_option("--n-fft", cmp_opt.n_fft, "FFT window (samples)")
      ->capture_default_str();
  cmp_cmd->add_option("--beats", cmp_opt.beats, "synthetic corpus beats")
      ->capture_default_str();
  cmp_cmd
      ->add_option("--beats-per-record", cmp_opt.beats_per_record,
                   "beats per synthetic record")
      ->capture_default_str();
  cmp_cmd
      ->add_option("--noise-std", cmp_opt.noise_std,
                   "synthetic corpus noise std (mV)")
      ->capture_default_str();
  cmp_cmd->add_option("--dt", cmp_opt.dt, "euler step (s)")
      ->capture_default_str();
  cmp_cmd->add_option("--gl-nodes", cmp_opt.gl_nodes, "quadrature order")
      ->capture_default_str();
  cmp_cmd->add_option("--window", cmp_opt.window, "smoothing window (s)")
      ->capture_default_str();

  PlotDataOptions plot_opt;
  CLI::App* plot_cmd = app.add_subcommand(
      "plot-data", "plot-ready CSV exports for a signal and its waves");
  plot_cmd->add_option("--signal", plot_opt.signal, "signal CSV")->required();
  plot_cmd->add_option("--out", plot_opt.out, "output directory")
      ->envname("ECGSEG_OUT_DIR")
      ->required();
  plot_cmd->add_option("--annotations", plot_opt.annotations,
                       "annotation JSON");
  plot_cmd->add_option("--n-fft", plot_opt.n_fft, "FFT window (samples)")
      ->capture_default_str();
  plot_cmd->add_option("--seed", plot_opt.seed, "recorded in the manifest")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (synth_cmd->parsed()) return run_synth(synth_opt, argc, argv);
    if (pre_cmd->parsed()) return run_preprocess(pre_opt, argc, argv);
    if (fft_cmd->parsed()) return run_fft(fft_opt, argc, argv);
    if (train_cmd->parsed()) return run_train(train_opt, argc, argv);
    if (eval_cmd->parsed()) return run_eval(eval_opt, argc, argv);
    if (cmp_cmd->parsed()) return run_compare(cmp_opt, argc, argv);
    if (plot_cmd->parsed()) return run_plot_data(plot_opt, argc, argv);
  } catch (const Error& e) {
    std::cerr << "ecgseg " << stage << ": error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "ecgseg " << stage << ": error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
