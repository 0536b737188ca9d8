#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pairint {

enum class ErrorCode {
  // core-data
  MalformedRecord,
  UnknownLabel,
  DanglingTrackId,
  InvalidInterval,
  // optical flow
  ImageTooSmall,
  DimensionMismatch,
  EmptyMask,
  InvalidParams,
  // features
  DegenerateBox,
  LengthMismatch,
  StatsDimensionMismatch,
  NonFiniteFeature,
  // micronet
  ShapeMismatch,
  NoCachedForward,
  InvalidTarget,
  EmptyDataset,
  UnknownLayer,
  VersionMismatch,
  CorruptFile,
  // stage 1 / stage 2
  InvalidThreshold,
  MissingEmbedding,
  DuplicateKey,
  // trainer / evaluator / synth
  NoPositives,
  TooFewScenes,
  Empty,
  PartitionMismatch,
  UnsatisfiableSpec,
  MissingFrameImage,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every recoverable failure in the library is reported as an `Error`
/// carrying a code that callers (notably the CLI) can dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pairint
