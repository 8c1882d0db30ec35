#include "svj/error.hpp"

namespace svj {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kEmptyVideo: return "EmptyVideo";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIOError: return "IOError";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kDegenerateSpec: return "DegenerateSpec";
    case ErrorCode::kInvalidTable: return "InvalidTable";
    case ErrorCode::kEmptyProfiles: return "EmptyProfiles";
    case ErrorCode::kTrainingDiverged: return "TrainingDiverged";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kNoPairs: return "NoPairs";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace svj
