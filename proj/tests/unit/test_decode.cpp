#include <doctest.h>

#include <sstream>

#include "riskspan/corpus.hpp"
#include "riskspan/decode.hpp"
#include "riskspan/error.hpp"
#include "riskspan/text.hpp"

using namespace riskspan;

namespace {

// Reference decoder written as a string scan: every maximal run that starts
// with B or with an I not preceded by B/I, followed by I's.
std::vector<TokenSpan> reference_decode(const std::string& tags) {
  std::vector<TokenSpan> spans;
  std::size_t i = 0;
  while (i < tags.size()) {
    if (tags[i] == 'O') {
      ++i;
      continue;
    }
    const std::size_t start = i++;
    while (i < tags.size() && tags[i] == 'I') ++i;
    spans.push_back({start, i - 1});
  }
  return spans;
}

TagSequence to_tags(const std::string& s) {
  TagSequence t;
  for (char c : s) t.push_back(c == 'B' ? BioTag::B : c == 'I' ? BioTag::I : BioTag::O);
  return t;
}

}  // namespace

TEST_CASE("argmax tags with tie order B > I > O") {
  const std::vector<TagDistribution> rows = {
      {1.0 / 3, 1.0 / 3, 1.0 / 3}, {0.1, 0.2, 0.7}, {0.2, 0.4, 0.4}, {0.5, 0.1, 0.4}, {0.3, 0.3, 0.4}};
  using enum BioTag;
  CHECK(argmax_tags(rows) == TagSequence{B, O, I, B, O});
}

TEST_CASE("decode_bio examples") {
  CHECK(decode_bio(to_tags("BIIOBIO")) == std::vector<TokenSpan>{{0, 2}, {4, 5}});
  CHECK(decode_bio(to_tags("OOO")).empty());
  CHECK(decode_bio(to_tags("IIOB")) == std::vector<TokenSpan>{{0, 1}, {3, 3}});
  CHECK(decode_bio(to_tags("BBI")) == std::vector<TokenSpan>{{0, 0}, {1, 2}});
  CHECK(decode_bio(TagSequence{}).empty());
}

TEST_CASE("decode_bio matches the reference on every sequence up to length 8") {
  std::size_t cases = 0;
  for (std::size_t len = 1; len <= 8; ++len) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < len; ++i) total *= 3;
    for (std::size_t code = 0; code < total; ++code) {
      std::string s(len, 'O');
      std::size_t c = code;
      for (std::size_t i = 0; i < len; ++i, c /= 3) s[i] = "BIO"[c % 3];
      const auto spans = decode_bio(to_tags(s));
      REQUIRE(spans == reference_decode(s));
      // Span count = B tags + I tags that open a span.
      std::size_t openers = 0;
      for (std::size_t i = 0; i < len; ++i) {
        openers += s[i] == 'B' || (s[i] == 'I' && (i == 0 || s[i - 1] == 'O'));
      }
      REQUIRE(spans.size() == openers);
      for (std::size_t k = 1; k < spans.size(); ++k) REQUIRE(spans[k - 1].end < spans[k].start);
      ++cases;
    }
  }
  CHECK(cases == 9840);
}

TEST_CASE("spans_to_char maps token ranges back to text") {
  const std::string text = "I feel hopeless today";
  const auto tokens = tokenize(text);
  const std::vector<TokenSpan> one = {{2, 2}};
  const auto out = spans_to_char(one, tokens, text);
  REQUIRE(out.size() == 1);
  CHECK(out[0].span.start == 7);
  CHECK(out[0].span.end == 15);
  CHECK(out[0].text == "hopeless");
  CHECK(spans_to_char({}, tokens, text).empty());
  const std::vector<TokenSpan> bad = {{3, 4}};
  try {
    spans_to_char(bad, tokens, text);
    FAIL("expected IndexOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IndexOutOfRange);
  }
}

TEST_CASE("spans_to_char slices by codepoint") {
  const std::string text = "caf\xC3\xA9 tr\xC3\xA8s triste";
  const auto tokens = tokenize(text);
  const std::vector<TokenSpan> span = {{1, 2}};
  const auto out = spans_to_char(span, tokens, text);
  CHECK(out[0].text == "tr\xC3\xA8s triste");
  CHECK(out[0].span.start == 5);
}

TEST_CASE("projection, decoding and char mapping round trip") {
  GenConfig g = GenConfig::defaults();
  g.count = 1000;
  for (const auto& doc : generate_synthetic(g, 21)) {
    const auto tokens = tokenize(doc.text);
    const auto decoded = spans_to_char(decode_bio(project_spans_to_bio(doc, tokens)), tokens, doc.text);
    const auto gold = merge_overlapping(doc.gold_spans);
    REQUIRE(decoded.size() == gold.size());
    for (std::size_t i = 0; i < gold.size(); ++i) {
      CHECK(decoded[i].span.start == gold[i].start);
      CHECK(decoded[i].span.end == gold[i].end);
    }
  }
}

TEST_CASE("risk argmax breaks ties toward severity") {
  CHECK(argmax_risk({0.25, 0.25, 0.25, 0.25}) == RiskLevel::D);
  CHECK(argmax_risk({0.4, 0.4, 0.1, 0.1}) == RiskLevel::B);
  CHECK(argmax_risk({0.7, 0.1, 0.1, 0.1}) == RiskLevel::A);
}

TEST_CASE("extract with zero heads marks every token") {
  ModelConfig c;
  c.embed_dim = 4;
  c.attention_dim = 4;
  Model m = init_model(c, Vocab({std::string(Vocab::kUnkTerm), "i", "feel"}));
  m.params.span_w.fill(0.0);
  m.params.cls_w.fill(0.0);
  const AnnotatedDocument doc{"z", "I feel odd.", RiskLevel::A, {}};
  const Prediction p = extract(m, doc);
  CHECK(p.id == "z");
  REQUIRE(p.spans.size() == 4);
  CHECK(p.spans[2].text == "odd");
  CHECK(p.spans[3].text == ".");
  CHECK(p.risk_pred == RiskLevel::D);
  CHECK_FALSE(p.truncated);
  CHECK(extract(m, doc) == p);
}

TEST_CASE("prediction lines round trip") {
  const std::vector<Prediction> preds = {
      {"p1", RiskLevel::C, {0.1, 0.2, 0.6, 0.1}, {{{2, 13, std::nullopt}, "want to die"}}, false},
      {"p2", RiskLevel::A, {0.9, 0.05, 0.03, 0.02}, {}, true},
  };
  std::ostringstream out;
  write_predictions(preds, out);
  CHECK(out.str().find("\"risk_probs\":{\"a\":0.1,") != std::string::npos);
  std::istringstream in(out.str());
  CHECK(read_predictions(in) == preds);
}
