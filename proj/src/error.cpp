#include "sacv/error.hpp"

namespace sacv {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::WriteError: return "WriteError";
    case ErrorCode::ReadError: return "ReadError";
    case ErrorCode::InvalidTensor: return "InvalidTensor";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::TrailingData: return "TrailingData";
    case ErrorCode::NonFiniteData: return "NonFiniteData";
    case ErrorCode::BadMetadata: return "BadMetadata";
    case ErrorCode::PairMismatch: return "PairMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateLayer: return "DuplicateLayer";
    case ErrorCode::NonPositiveField: return "NonPositiveField";
    case ErrorCode::UnknownLayer: return "UnknownLayer";
    case ErrorCode::LocationOutOfRange: return "LocationOutOfRange";
    case ErrorCode::LayerMismatch: return "LayerMismatch";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::EmptySide: return "EmptySide";
    case ErrorCode::AlreadyStandardized: return "AlreadyStandardized";
    case ErrorCode::SingleClassAfterSplit: return "SingleClassAfterSplit";
    case ErrorCode::StandardizationMismatch: return "StandardizationMismatch";
    case ErrorCode::EnsembleTooSmall: return "EnsembleTooSmall";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::WrongKind: return "WrongKind";
    case ErrorCode::MissingClass: return "MissingClass";
    case ErrorCode::BadFraction: return "BadFraction";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::MixedClass: return "MixedClass";
    case ErrorCode::BadClass: return "BadClass";
    case ErrorCode::BadSize: return "BadSize";
    case ErrorCode::BadPeriod: return "BadPeriod";
    case ErrorCode::BadRange: return "BadRange";
    case ErrorCode::BadTarget: return "BadTarget";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::OutputExists: return "OutputExists";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
      code_(code) {}

}  // namespace sacv
