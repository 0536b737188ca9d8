#include "pairint/error.hpp"

namespace pairint {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::DanglingTrackId: return "DanglingTrackId";
    case ErrorCode::InvalidInterval: return "InvalidInterval";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::StatsDimensionMismatch: return "StatsDimensionMismatch";
    case ErrorCode::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NoCachedForward: return "NoCachedForward";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::UnknownLayer: return "UnknownLayer";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::InvalidThreshold: return "InvalidThreshold";
    case ErrorCode::MissingEmbedding: return "MissingEmbedding";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::TooFewScenes: return "TooFewScenes";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::PartitionMismatch: return "PartitionMismatch";
    case ErrorCode::UnsatisfiableSpec: return "UnsatisfiableSpec";
    case ErrorCode::MissingFrameImage: return "MissingFrameImage";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace pairint
