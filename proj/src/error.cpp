#include "riskspan/error.hpp"

#include "riskspan/types.hpp"

namespace riskspan {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::SpanOutOfBounds: return "SpanOutOfBounds";
    case ErrorCode::UnknownRiskLevel: return "UnknownRiskLevel";
    case ErrorCode::TokenMismatch: return "TokenMismatch";
    case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyLexicon: return "EmptyLexicon";
    case ErrorCode::IdOutOfVocab: return "IdOutOfVocab";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::MalformedModel: return "MalformedModel";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::LambdaOutOfRange: return "LambdaOutOfRange";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NondeterministicOutput: return "NondeterministicOutput";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

namespace {
std::string format_message(ErrorCode code, const std::string& message, std::size_t line) {
  std::string out = to_string(code);
  if (line > 0) out += " at line " + std::to_string(line);
  out += ": ";
  out += message;
  return out;
}
}  // namespace

Error::Error(ErrorCode code, const std::string& message, std::size_t line)
    : std::runtime_error(format_message(code, message, line)), code_(code), line_(line) {}

char risk_char(RiskLevel r) { return static_cast<char>('a' + static_cast<int>(r)); }

std::optional<RiskLevel> parse_risk(std::string_view s) {
  if (s.size() != 1 || s[0] < 'a' || s[0] > 'd') return std::nullopt;
  return static_cast<RiskLevel>(s[0] - 'a');
}

char tag_char(BioTag t) {
  switch (t) {
    case BioTag::B: return 'B';
    case BioTag::I: return 'I';
    case BioTag::O: return 'O';
  }
  return '?';
}

}  // namespace riskspan
