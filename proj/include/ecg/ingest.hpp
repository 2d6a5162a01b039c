#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ecg/signal.hpp"

namespace ecg {

/// Time-span wave annotation; [start, end) in seconds.
struct AnnotationSpan {
  double start = 0.0;
  double end = 0.0;
  WaveClass label = WaveClass::Background;
};

struct AnnotationSet {
  std::vector<AnnotationSpan> spans;
  std::string source;
};

/// Annotation JSON: {"source": string,
///                   "spans": [{"start": s, "end": s, "label": "P|QRS|T"}]}.
/// Labels are exact-match; spans must satisfy start < end and same-label
/// spans must not overlap.
AnnotationSet read_annotations_json(const std::filesystem::path& path);
void write_annotations_json(const AnnotationSet& annotations,
                            const std::filesystem::path& path);

/// Load a signal CSV + annotation JSON pair; spans reaching past the signal
/// duration are rejected with SpanOutOfRange naming the span index.
std::pair<SampledSignal, AnnotationSet> load_record(
    const std::filesystem::path& signal_path,
    const std::filesystem::path& annotation_path);

/// Sample i takes the label of the span containing i/fs (half-open spans);
/// overlapping labels resolve with priority QRS > P > T.
LabelMask rasterize(const AnnotationSet& annotations, double fs,
                    Eigen::Index length);

/// Inverse of rasterize: one span per maximal non-background run.
AnnotationSet spans_from_mask(const LabelMask& mask, double fs);

/// Mask CSV: header "index,class", one "i,NAME" row per sample; round-trips
/// losslessly through load_mask.
void export_mask(const LabelMask& mask, const std::filesystem::path& path);
LabelMask load_mask(const std::filesystem::path& path);

}  // namespace ecg
