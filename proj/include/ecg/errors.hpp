#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ecg {

/// Base class for all named domain errors. `what()` is "<Name>: <detail>";
/// the CLI maps any Error to exit code 1 and prints the name verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& detail)
      : std::runtime_error(name + ": " + detail), name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

#define ECG_DEFINE_ERROR(NAME)                                             \
  class NAME : public Error {                                              \
   public:                                                                 \
    explicit NAME(const std::string& detail) : Error(#NAME, detail) {}     \
  }

ECG_DEFINE_ERROR(InvalidArgument);

// signal-core
ECG_DEFINE_ERROR(ConstantSignal);
ECG_DEFINE_ERROR(BandOutOfRange);
ECG_DEFINE_ERROR(NonIntegerFactor);

// synth
ECG_DEFINE_ERROR(ConfigInvalid);

// spectral
ECG_DEFINE_ERROR(EmptySignal);
ECG_DEFINE_ERROR(EmptyBand);
ECG_DEFINE_ERROR(ResolutionMismatch);
ECG_DEFINE_ERROR(ZeroSpectrum);
ECG_DEFINE_ERROR(ClassAbsent);

// transforms
ECG_DEFINE_ERROR(OrderOutOfRange);
ECG_DEFINE_ERROR(StepTooLarge);
ECG_DEFINE_ERROR(WindowTooSmall);

// neural
ECG_DEFINE_ERROR(ShapeMismatch);
ECG_DEFINE_ERROR(ZeroVariance);
ECG_DEFINE_ERROR(EmptyDataset);

// evaluate
ECG_DEFINE_ERROR(EmptyInput);
ECG_DEFINE_ERROR(SegmentTooShort);
ECG_DEFINE_ERROR(LengthMismatch);
ECG_DEFINE_ERROR(InsufficientSeeds);

// ingest
ECG_DEFINE_ERROR(ParseError);
ECG_DEFINE_ERROR(SpanOutOfRange);
ECG_DEFINE_ERROR(IoFailure);

#undef ECG_DEFINE_ERROR

/// Thrown when the iterative spectrum-matching search exhausts its iteration
/// budget; carries the best similarity score reached.
class NotConverged : public Error {
 public:
  NotConverged(const std::string& detail, double best_score)
      : Error("NotConverged", detail), best_score_(best_score) {}

  double best_score() const noexcept { return best_score_; }

 private:
  double best_score_;
};

}  // namespace ecg
