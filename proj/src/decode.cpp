#include "riskspan/decode.hpp"

#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "riskspan/error.hpp"
#include "riskspan/unicode.hpp"

namespace riskspan {

TagSequence argmax_tags(std::span<const TagDistribution> p_span) {
  TagSequence tags;
  tags.reserve(p_span.size());
  for (const auto& row : p_span) {
    std::size_t best = 0;  // B wins ties, then I
    for (std::size_t j = 1; j < kNumTags; ++j) {
      if (row[j] > row[best]) best = j;
    }
    tags.push_back(static_cast<BioTag>(best));
  }
  return tags;
}

std::vector<TokenSpan> decode_bio(std::span<const BioTag> tags) {
  std::vector<TokenSpan> spans;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    switch (tags[i]) {
      case BioTag::B:
        spans.push_back({i, i});
        open = true;
        break;
      case BioTag::I:
        if (open) {
          spans.back().end = i;
        } else {
          spans.push_back({i, i});
          open = true;
        }
        break;
      case BioTag::O:
        open = false;
        break;
    }
  }
  return spans;
}

std::vector<ExtractedSpan> spans_to_char(std::span<const TokenSpan> spans, std::span<const Token> tokens,
                                         std::string_view text) {
  std::vector<ExtractedSpan> out;
  if (spans.empty()) return out;
  const std::u32string cps = unicode::decode_utf8(text);
  for (const TokenSpan& s : spans) {
    if (s.start > s.end || s.end >= tokens.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "token span (" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                                                  ") outside " + std::to_string(tokens.size()) + " tokens");
    }
    const std::size_t start = tokens[s.start].char_start;
    const std::size_t end = tokens[s.end].char_end;
    if (end > cps.size()) throw Error(ErrorCode::TokenMismatch, "token offsets outside text");
    out.push_back({CharSpan{start, end, std::nullopt},
                   unicode::encode_utf8(std::u32string_view(cps).substr(start, end - start))});
  }
  return out;
}

RiskLevel argmax_risk(const RiskDistribution& probs) {
  std::size_t best = kNumRiskLevels - 1;  // severe side wins ties
  for (std::size_t k = kNumRiskLevels - 1; k-- > 0;) {
    if (probs[k] > probs[best]) best = k;
  }
  return static_cast<RiskLevel>(best);
}

Prediction extract(const Model& model, const AnnotatedDocument& doc) {
  const auto tokens = tokenize(doc.text);
  const ModelOutput out = forward(model, tokens);
  const TagSequence tags = argmax_tags(out.p_span);
  const auto token_spans = decode_bio(tags);
  Prediction p;
  p.id = doc.id;
  p.risk_probs = out.p_cls;
  p.risk_pred = argmax_risk(out.p_cls);
  p.spans = spans_to_char(token_spans, tokens, doc.text);
  p.truncated = out.truncated;
  return p;
}

std::string to_jsonl_line(const Prediction& pred) {
  nlohmann::ordered_json j;
  j["id"] = pred.id;
  j["risk_pred"] = std::string(1, risk_char(pred.risk_pred));
  nlohmann::ordered_json probs;
  for (RiskLevel r : kAllRiskLevels) probs[std::string(1, risk_char(r))] = pred.risk_probs[index_of(r)];
  j["risk_probs"] = std::move(probs);
  nlohmann::ordered_json spans = nlohmann::ordered_json::array();
  for (const auto& s : pred.spans) {
    nlohmann::ordered_json o;
    o["start"] = s.span.start;
    o["end"] = s.span.end;
    o["text"] = s.text;
    spans.push_back(std::move(o));
  }
  j["spans"] = std::move(spans);
  j["truncated"] = pred.truncated;
  return j.dump();
}

void write_predictions(std::span<const Prediction> preds, std::ostream& out) {
  for (const auto& p : preds) out << to_jsonl_line(p) << '\n';
}

std::vector<Prediction> read_predictions(std::istream& in) {
  std::vector<Prediction> preds;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Prediction p;
      p.id = j.at("id").get<std::string>();
      const auto risk = parse_risk(j.at("risk_pred").get<std::string>());
      if (!risk) throw Error(ErrorCode::UnknownRiskLevel, "unknown risk_pred", line_no);
      p.risk_pred = *risk;
      const auto& probs = j.at("risk_probs");
      for (RiskLevel r : kAllRiskLevels) p.risk_probs[index_of(r)] = probs.at(std::string(1, risk_char(r))).get<double>();
      for (const auto& s : j.at("spans")) {
        p.spans.push_back({CharSpan{s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(), std::nullopt},
                           s.value("text", std::string())});
      }
      p.truncated = j.value("truncated", false);
      if (!seen.insert(p.id).second) throw Error(ErrorCode::DuplicateId, "duplicate id '" + p.id + "'", line_no);
      preds.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedJson, e.what(), line_no);
    }
  }
  return preds;
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open predictions file " + path.string());
  return read_predictions(in);
}

}  // namespace riskspan
