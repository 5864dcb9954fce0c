#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sacv {

/// Every failure the toolkit reports carries one of these codes so callers
/// (and the CLI) can tell the precise cause apart.
enum class ErrorCode {
  // tensor-io
  WriteError,
  ReadError,
  InvalidTensor,
  BadMagic,
  UnsupportedVersion,
  UnsupportedDtype,
  TruncatedPayload,
  TrailingData,
  NonFiniteData,
  BadMetadata,
  PairMismatch,
  // receptive-field
  ParseError,
  DuplicateLayer,
  NonPositiveField,
  UnknownLayer,
  LocationOutOfRange,
  // concept-probe
  LayerMismatch,
  ChannelMismatch,
  EmptySide,
  AlreadyStandardized,
  SingleClassAfterSplit,
  StandardizationMismatch,
  EnsembleTooSmall,
  BadConfig,
  // explanation-maps
  DimensionMismatch,
  WrongKind,
  MissingClass,
  BadFraction,
  EmptySet,
  MixedClass,
  // toy-model
  BadClass,
  BadSize,
  BadPeriod,
  // render
  BadRange,
  BadTarget,
  ShapeMismatch,
  // cli
  OutputExists,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sacv
