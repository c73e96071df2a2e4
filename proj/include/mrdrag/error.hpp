#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mrdrag {

/// Every failure the library reports carries one of these codes. The
/// service maps them onto stable wire codes (see error_wire_code).
enum class ErrorCode {
  // corpus
  MissingFile,
  MalformedRecord,
  DuplicateDiseaseId,
  DanglingRecordReference,
  // embedding / index
  EmptyText,
  BackendUnavailable,
  DimensionMismatch,
  ZeroVector,
  EmbeddingFailed,
  EmptyCorpus,
  FingerprintMismatch,
  CorruptIndex,
  // llm
  ScriptExhausted,
  ResponseEmpty,
  InvalidRequest,
  // pipeline
  NoPatientTurns,
  NoCandidates,
  EmptyResponse,
  SessionConcluded,
  SessionBusy,
  // evaluation
  UnresolvableGold,
  // shell
  ConfigError,
  NotFound,
  Timeout,
  Unauthorized,
};

std::string_view to_string(ErrorCode code);

/// Upper-snake identifier used in HTTP error bodies, e.g. "SESSION_CONCLUDED".
std::string error_wire_code(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by the corpus loader; points at the offending file and line
/// (line is 0 when the problem is not tied to one line).
class CorpusError : public Error {
 public:
  CorpusError(ErrorCode code, std::string file, std::size_t line, const std::string& reason);

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string file_;
  std::size_t line_;
  std::string reason_;
};

}  // namespace mrdrag
