#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace riskspan {

/// Ordinal risk label: a (none) < b (low) < c (medium) < d (high).
enum class RiskLevel : int { A = 0, B = 1, C = 2, D = 3 };

inline constexpr std::size_t kNumRiskLevels = 4;
inline constexpr std::array<RiskLevel, kNumRiskLevels> kAllRiskLevels = {
    RiskLevel::A, RiskLevel::B, RiskLevel::C, RiskLevel::D};

inline constexpr std::size_t index_of(RiskLevel r) { return static_cast<std::size_t>(r); }
char risk_char(RiskLevel r);
/// Parses "a".."d". Returns nullopt for anything else.
std::optional<RiskLevel> parse_risk(std::string_view s);

/// Probabilities over (a, b, c, d).
using RiskDistribution = std::array<double, kNumRiskLevels>;

/// Half-open codepoint range [start, end) into a document's text.
struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::optional<std::string> label;

  std::size_t length() const { return end - start; }
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

/// Inclusive token index range [start, end].
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct AnnotatedDocument {
  std::string id;
  std::string text;  // UTF-8
  RiskLevel risk = RiskLevel::A;
  std::vector<CharSpan> gold_spans;  // sorted by start

  friend bool operator==(const AnnotatedDocument&, const AnnotatedDocument&) = default;
};

enum class BioTag : int { B = 0, I = 1, O = 2 };
inline constexpr std::size_t kNumTags = 3;
char tag_char(BioTag t);

using TagSequence = std::vector<BioTag>;

struct Token {
  std::string surface;  // lowercased
  std::size_t char_start = 0;
  std::size_t char_end = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

}  // namespace riskspan
