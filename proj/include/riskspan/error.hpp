#pragma once

#include <stdexcept>
#include <string>

namespace riskspan {

enum class ErrorCode {
  MalformedJson,
  MissingField,
  DuplicateId,
  EmptyText,
  SpanOutOfBounds,
  UnknownRiskLevel,
  TokenMismatch,
  CorpusTooSmall,
  InvalidArgument,
  EmptyLexicon,
  IdOutOfVocab,
  EmptyInput,
  UnsupportedVersion,
  MalformedModel,
  ShapeMismatch,
  LengthMismatch,
  LambdaOutOfRange,
  EmptyCorpus,
  NonFiniteLoss,
  IndexOutOfRange,
  IdMismatch,
  DimensionMismatch,
  NondeterministicOutput,
  Io,
};

const char* to_string(ErrorCode code);

/// Library-wide exception. `line` is the 1-based input line for file
/// parsing errors, 0 otherwise.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message, std::size_t line = 0);

  ErrorCode code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }

private:
  ErrorCode code_;
  std::size_t line_;
};

}  // namespace riskspan
