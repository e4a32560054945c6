#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stan {

enum class ErrorCode {
  kMalformedContainer,
  kUnsupportedEncoding,
  kUnsupportedRate,
  kSegmentOutOfRange,
  kDimensionMismatch,
  kInsufficientData,
  kInvalidPhoneSet,
  kSegmentTooShort,
  kNotSeparableWell,
  kStorageFull,
  kWriteConflict,
  kNotFound,
  kCorruptArtifact,
  kMissingReadingText,
  kInvalidState,
  kMalformedAudio,
  kNotReady,
  kSpanTooLong,
  kRangeOutOfBounds,
  kTooLittleSpeech,
  kInvalidConfig,
  kIo,
};

/// Stable snake_case name used in JSON error bodies.
inline std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedContainer: return "malformed_container";
    case ErrorCode::kUnsupportedEncoding: return "unsupported_encoding";
    case ErrorCode::kUnsupportedRate: return "unsupported_rate";
    case ErrorCode::kSegmentOutOfRange: return "segment_out_of_range";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kInsufficientData: return "insufficient_data";
    case ErrorCode::kInvalidPhoneSet: return "invalid_phone_set";
    case ErrorCode::kSegmentTooShort: return "segment_too_short";
    case ErrorCode::kNotSeparableWell: return "not_separable_well";
    case ErrorCode::kStorageFull: return "storage_full";
    case ErrorCode::kWriteConflict: return "write_conflict";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kCorruptArtifact: return "corrupt_artifact";
    case ErrorCode::kMissingReadingText: return "missing_reading_text";
    case ErrorCode::kInvalidState: return "invalid_state";
    case ErrorCode::kMalformedAudio: return "malformed_audio";
    case ErrorCode::kNotReady: return "not_ready";
    case ErrorCode::kSpanTooLong: return "span_too_long";
    case ErrorCode::kRangeOutOfBounds: return "range_out_of_bounds";
    case ErrorCode::kTooLittleSpeech: return "too_little_speech";
    case ErrorCode::kInvalidConfig: return "invalid_config";
    case ErrorCode::kIo: return "io_error";
  }
  return "unknown";
}

/// The single exception type thrown by the library. Callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace stan
