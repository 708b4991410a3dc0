#pragma once

#include <stdexcept>
#include <string>

namespace mfd {

enum class Errc {
  // parsing / data
  BadMagic,
  TruncatedHeader,
  TruncatedRecord,
  MalformedFrame,
  InvalidFraction,
  UnlabeledFlow,
  Io,
  BadFormat,
  // numerics / model
  DimensionMismatch,
  ShapeMismatch,
  LabelOutOfRange,
  NonPositiveCoefficient,
  UnknownClass,
  EmptyClass,
  BadSpec,
  // datasets / metrics / config
  ScaleTooSmall,
  TargetTooLarge,
  ClassTooSmall,
  LengthMismatch,
  EmptyMatrix,
  HoldoutUnknown,
  BadConfig,
};

const char* errc_name(Errc code) noexcept;

/// True for codes caused by bad input data rather than bad configuration.
bool is_data_error(Errc code) noexcept;

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

}  // namespace mfd
