#include "mrdrag/error.hpp"

#include <cctype>

namespace mrdrag {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateDiseaseId: return "DuplicateDiseaseId";
    case ErrorCode::DanglingRecordReference: return "DanglingRecordReference";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmbeddingFailed: return "EmbeddingFailed";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::CorruptIndex: return "CorruptIndex";
    case ErrorCode::ScriptExhausted: return "ScriptExhausted";
    case ErrorCode::ResponseEmpty: return "ResponseEmpty";
    case ErrorCode::InvalidRequest: return "InvalidRequest";
    case ErrorCode::NoPatientTurns: return "NoPatientTurns";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::EmptyResponse: return "EmptyResponse";
    case ErrorCode::SessionConcluded: return "SessionConcluded";
    case ErrorCode::SessionBusy: return "SessionBusy";
    case ErrorCode::UnresolvableGold: return "UnresolvableGold";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::Unauthorized: return "Unauthorized";
  }
  return "Unknown";
}

std::string error_wire_code(ErrorCode code) {
  std::string out;
  for (char c : to_string(code)) {
    if (std::isupper(static_cast<unsigned char>(c)) && !out.empty()) out.push_back('_');
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

namespace {
std::string corpus_message(ErrorCode code, const std::string& file, std::size_t line,
                           const std::string& reason) {
  std::string msg(to_string(code));
  msg += ": ";
  msg += file;
  if (line > 0) msg += ":" + std::to_string(line);
  msg += ": " + reason;
  return msg;
}
}  // namespace

CorpusError::CorpusError(ErrorCode code, std::string file, std::size_t line,
                         const std::string& reason)
    : Error(code, corpus_message(code, file, line, reason)),
      file_(std::move(file)),
      line_(line),
      reason_(reason) {}

}  // namespace mrdrag
