#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "riskspan/model.hpp"
#include "riskspan/types.hpp"

namespace riskspan {

/// Per-row argmax; ties resolve B > I > O.
TagSequence argmax_tags(std::span<const TagDistribution> p_span);

/// Each B opens a span that runs through the following I tags. An I with no
/// open span is read as B.
std::vector<TokenSpan> decode_bio(std::span<const BioTag> tags);

struct ExtractedSpan {
  CharSpan span;
  std::string text;

  friend bool operator==(const ExtractedSpan&, const ExtractedSpan&) = default;
};

std::vector<ExtractedSpan> spans_to_char(std::span<const TokenSpan> spans,
                                         std::span<const Token> tokens, std::string_view text);

/// Argmax over (a, b, c, d); ties resolve toward the more severe level.
RiskLevel argmax_risk(const RiskDistribution& probs);

struct Prediction {
  std::string id;
  RiskLevel risk_pred = RiskLevel::A;
  RiskDistribution risk_probs{};
  std::vector<ExtractedSpan> spans;
  bool truncated = false;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

Prediction extract(const Model& model, const AnnotatedDocument& doc);

std::string to_jsonl_line(const Prediction& pred);
void write_predictions(std::span<const Prediction> preds, std::ostream& out);
std::vector<Prediction> read_predictions(std::istream& in);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

}  // namespace riskspan
