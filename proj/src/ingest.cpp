#include "ecg/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "ecg/errors.hpp"

namespace ecg {

namespace {

using nlohmann::json;

void validate_annotations(const AnnotationSet& annotations,
                          const std::string& where) {
  for (std::size_t i = 0; i < annotations.spans.size(); ++i) {
    const AnnotationSpan& span = annotations.spans[i];
    if (!(span.start < span.end))
      throw ParseError(where + ": span " + std::to_string(i) +
                       " must have start < end");
    if (span.label == WaveClass::Background)
      throw ParseError(where + ": span " + std::to_string(i) +
                       " must carry a wave label");
  }
  // Same-label spans must not overlap.
  for (const WaveClass cls : {WaveClass::P, WaveClass::Qrs, WaveClass::T}) {
    std::vector<const AnnotationSpan*> spans;
    for (const AnnotationSpan& span : annotations.spans)
      if (span.label == cls) spans.push_back(&span);
    std::sort(spans.begin(), spans.end(),
              [](const auto* a, const auto* b) { return a->start < b->start; });
    for (std::size_t i = 1; i < spans.size(); ++i)
      if (spans[i]->start < spans[i - 1]->end)
        throw ParseError(where + ": overlapping " +
                         std::string(to_string(cls)) + " spans at " +
                         std::to_string(spans[i]->start) + " s");
  }
}

}  // namespace

AnnotationSet read_annotations_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path.string());

  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }

  AnnotationSet annotations;
  try {
    if (!doc.is_object() || !doc.contains("spans"))
      throw ParseError(path.string() + ": expected object with 'spans'");
    annotations.source = doc.value("source", std::string());
    std::size_t index = 0;
    for (const json& item : doc.at("spans")) {
      AnnotationSpan span;
      span.start = item.at("start").get<double>();
      span.end = item.at("end").get<double>();
      const auto label = item.at("label").get<std::string>();
      const auto cls = wave_class_from_string(label);
      if (!cls || *cls == WaveClass::Background)
        throw ParseError(path.string() + ": span " + std::to_string(index) +
                         " has unknown label '" + label + "'");
      span.label = *cls;
      annotations.spans.push_back(span);
      ++index;
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }

  validate_annotations(annotations, path.string());
  return annotations;
}

void write_annotations_json(const AnnotationSet& annotations,
                            const std::filesystem::path& path) {
  json spans = json::array();
  for (const AnnotationSpan& span : annotations.spans)
    spans.push_back({{"start", span.start},
                     {"end", span.end},
                     {"label", std::string(to_string(span.label))}});
  const json doc = {{"source", annotations.source}, {"spans", spans}};

  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw IoFailure("write failed for " + path.string());
}

std::pair<SampledSignal, AnnotationSet> load_record(
    const std::filesystem::path& signal_path,
    const std::filesystem::path& annotation_path) {
  SampledSignal signal = read_signal_csv(signal_path);
  AnnotationSet annotations = read_annotations_json(annotation_path);

  const double duration = signal.duration();
  for (std::size_t i = 0; i < annotations.spans.size(); ++i)
    if (annotations.spans[i].end > duration)
      throw SpanOutOfRange("span " + std::to_string(i) + " ends at " +
                           std::to_string(annotations.spans[i].end) +
                           " s beyond signal duration " +
                           std::to_string(duration) + " s");
  return {std::move(signal), std::move(annotations)};
}

LabelMask rasterize(const AnnotationSet& annotations, double fs,
                    Eigen::Index length) {
  if (!(fs > 0.0)) throw InvalidArgument("fs must be positive");

  LabelMask mask;
  mask.classes.assign(static_cast<std::size_t>(length),
                      WaveClass::Background);

  // Half-open [start, end): first sample is ceil(start*fs), last is the one
  // strictly below end*fs. The 1e-6-sample slack absorbs decimal-to-binary
  // rounding of span bounds.
  const auto paint = [&](const AnnotationSpan& span) {
    const auto first = static_cast<Eigen::Index>(
        std::ceil(span.start * fs - 1e-6));
    const auto past = static_cast<Eigen::Index>(
        std::ceil(span.end * fs - 1e-6));
    for (Eigen::Index i = std::max<Eigen::Index>(first, 0);
         i < std::min(past, length); ++i)
      mask.classes[static_cast<std::size_t>(i)] = span.label;
  };
  for (const WaveClass cls : {WaveClass::T, WaveClass::P, WaveClass::Qrs})
    for (const AnnotationSpan& span : annotations.spans)
      if (span.label == cls) paint(span);
  return mask;
}

AnnotationSet spans_from_mask(const LabelMask& mask, double fs) {
  AnnotationSet annotations;
  annotations.source = "derived from mask";
  for (const MaskRun& run : mask_runs(mask))
    annotations.spans.push_back({static_cast<double>(run.begin) / fs,
                                 static_cast<double>(run.end) / fs, run.cls});
  return annotations;
}

void export_mask(const LabelMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out << "index,class\n";
  for (std::size_t i = 0; i < mask.classes.size(); ++i)
    out << i << ',' << to_string(mask.classes[i]) << '\n';
  if (!out) throw IoFailure("write failed for " + path.string());
}

LabelMask load_mask(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line))
    throw ParseError(path.string() + ":1: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "index,class")
    throw ParseError(path.string() + ":1: expected header 'index,class'");

  LabelMask mask;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected 'index,class'");
    const std::string index_text = line.substr(0, comma);
    const std::string class_text = line.substr(comma + 1);
    std::size_t expected = mask.classes.size();
    if (index_text != std::to_string(expected))
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected index " + std::to_string(expected) +
                       ", got '" + index_text + "'");
    const auto cls = wave_class_from_string(class_text);
    if (!cls)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": unknown class '" + class_text + "'");
    mask.classes.push_back(*cls);
  }
  return mask;
}

}  // namespace ecg
