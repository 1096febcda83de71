#pragma once

#include <stdexcept>
#include <string>

namespace provgen {

enum class ErrorCode {
  CorpusEmpty,
  InvalidTokenId,
  EmptyPrefix,
  PrefixTooLong,
  SequenceTooShort,
  TrainingDiverged,
  SelectionTooLarge,
  SelectionConfigMismatch,
  DimensionMismatch,
  DuplicateRecord,
  SelectionHashMismatch,
  NotClustered,
  EmptyTrainingSet,
  EmptyCaseSet,
  InsufficientSamples,
  EmptyInput,
  IoError,
  FormatError,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::CorpusEmpty: return "CorpusEmpty";
    case ErrorCode::InvalidTokenId: return "InvalidTokenId";
    case ErrorCode::EmptyPrefix: return "EmptyPrefix";
    case ErrorCode::PrefixTooLong: return "PrefixTooLong";
    case ErrorCode::SequenceTooShort: return "SequenceTooShort";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::SelectionTooLarge: return "SelectionTooLarge";
    case ErrorCode::SelectionConfigMismatch: return "SelectionConfigMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateRecord: return "DuplicateRecord";
    case ErrorCode::SelectionHashMismatch: return "SelectionHashMismatch";
    case ErrorCode::NotClustered: return "NotClustered";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::EmptyCaseSet: return "EmptyCaseSet";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace provgen
