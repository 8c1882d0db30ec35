#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace svj {

enum class ErrorCode {
  kNonFinite,
  kEmptyVideo,
  kShapeMismatch,
  kConfigError,
  kIOError,
  kFormatError,
  kDegenerateSpec,
  kInvalidTable,
  kEmptyProfiles,
  kTrainingDiverged,
  kEmptyBatch,
  kLengthMismatch,
  kEmptyCorpus,
  kNoPairs,
};

std::string_view to_string(ErrorCode code);

// Every module reports failures through this one exception type; callers
// branch on code() rather than on the message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace svj
