#include "ghost/error.hpp"

namespace ghost {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::GrainTooLarge: return "GrainTooLarge";
    case ErrorCode::ConstantSequence: return "ConstantSequence";
    case ErrorCode::DidNotConverge: return "DidNotConverge";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::AllPositionsIgnored: return "AllPositionsIgnored";
    case ErrorCode::NoTape: return "NoTape";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::NonBinaryImage: return "NonBinaryImage";
    case ErrorCode::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::SourceTooLong: return "SourceTooLong";
    case ErrorCode::TargetTooLong: return "TargetTooLong";
    case ErrorCode::MixedSourceLengths: return "MixedSourceLengths";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::SourceLengthMismatch: return "SourceLengthMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::ZeroSignal: return "ZeroSignal";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::IncompatibleArtifacts: return "IncompatibleArtifacts";
    case ErrorCode::ProvenanceMismatch: return "ProvenanceMismatch";
  }
  return "Unknown";
}

}  // namespace ghost
