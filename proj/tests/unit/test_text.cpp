#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "riskspan/text.hpp"
#include "riskspan/unicode.hpp"

using namespace riskspan;

namespace {

std::vector<std::string> surfaces(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.push_back(t.surface);
  return out;
}

std::vector<Token> tokens_of(std::initializer_list<const char*> words) {
  std::vector<Token> out;
  std::size_t pos = 0;
  for (const char* w : words) {
    const std::size_t len = std::string(w).size();
    out.push_back({w, pos, pos + len});
    pos += len + 1;
  }
  return out;
}

// Every non-space codepoint lies in exactly one token; offsets increase.
void check_coverage(const std::string& text) {
  const auto cps = unicode::decode_utf8(text);
  const auto tokens = tokenize(text);
  std::vector<int> hits(cps.size(), 0);
  std::size_t last_end = 0;
  for (const auto& t : tokens) {
    REQUIRE(t.char_start < t.char_end);
    REQUIRE(t.char_start >= last_end);
    REQUIRE(t.char_end <= cps.size());
    last_end = t.char_end;
    for (std::size_t i = t.char_start; i < t.char_end; ++i) ++hits[i];
  }
  for (std::size_t i = 0; i < cps.size(); ++i) {
    CHECK(hits[i] == (unicode::is_space(cps[i]) ? 0 : 1));
  }
}

}  // namespace

TEST_CASE("utf8 decode and encode round trip") {
  const std::string s = "na\xC3\xAFve \xE2\x9C\x93 \xF0\x9F\x98\x80";
  const auto cps = unicode::decode_utf8(s);
  CHECK(cps.size() == 9);
  CHECK(cps[2] == U'ï');
  CHECK(cps[8] == U'\U0001F600');
  CHECK(unicode::encode_utf8(cps) == s);
  CHECK(unicode::codepoint_length(s) == 9);
}

TEST_CASE("invalid utf8 bytes become replacement characters") {
  const auto cps = unicode::decode_utf8("a\xFF" "b");
  REQUIRE(cps.size() == 3);
  CHECK(cps[1] == U'�');
}

TEST_CASE("tokenize sentence with final punctuation") {
  const auto tokens = tokenize("I want to die.");
  REQUIRE(tokens.size() == 5);
  CHECK(surfaces(tokens) == std::vector<std::string>{"i", "want", "to", "die", "."});
  CHECK(tokens[4].char_start == 13);
  CHECK(tokens[4].char_end == 14);
  CHECK(tokens[0].char_start == 0);
  CHECK(tokens[3].char_start == 10);
}

TEST_CASE("tokenize empty and whitespace-only text") {
  CHECK(tokenize("").empty());
  CHECK(tokenize(" \t\n ").empty());
}

TEST_CASE("tokenize splits apostrophes into their own token") {
  const auto tokens = tokenize("can't cope");
  CHECK(surfaces(tokens) == std::vector<std::string>{"can", "'", "t", "cope"});
  CHECK(tokens[0].char_start == 0);
  CHECK(tokens[0].char_end == 3);
  CHECK(tokens[1].char_start == 3);
  CHECK(tokens[1].char_end == 4);
  CHECK(tokens[2].char_start == 4);
  CHECK(tokens[2].char_end == 5);
  CHECK(tokens[3].char_start == 6);
  CHECK(tokens[3].char_end == 10);
  // Contiguous pieces cover all 9 non-space codepoints.
  std::size_t covered = 0;
  for (const auto& t : tokens) covered += t.char_end - t.char_start;
  CHECK(covered == 9);
}

TEST_CASE("tokenize lowercases surface but offsets address the original") {
  const auto tokens = tokenize("  \xC3\x89T\xC3\x89 Hopeless");
  REQUIRE(tokens.size() == 2);
  CHECK(tokens[0].surface == "\xC3\xA9t\xC3\xA9");
  CHECK(tokens[0].char_start == 2);
  CHECK(tokens[0].char_end == 5);
  CHECK(tokens[1].surface == "hopeless");
  CHECK(tokens[1].char_start == 6);
}

TEST_CASE("tokenize treats symbols and emoji as single tokens") {
  const auto tokens = tokenize("ok\xF0\x9F\x98\x80\xE2\x80\x94" "fine");
  CHECK(surfaces(tokens) == std::vector<std::string>{"ok", "\xF0\x9F\x98\x80", "\xE2\x80\x94", "fine"});
}

TEST_CASE("tokenize coverage property on fixed and random text") {
  check_coverage("Hello,   world!! It's 3am... \xE2\x80\x94 caf\xC3\xA9 \xE3\x80\x82ok");
  std::mt19937 gen(11);
  const std::vector<std::string> pieces = {"a", "B", "7", " ", "  ", ".", "'", "\xC3\xA9", "\xE2\x80\x94",
                                           "\t", "\xF0\x9F\x98\x80", "-", "\xE4\xB8\xAD", "\n"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    const int len = static_cast<int>(gen() % 30);
    for (int i = 0; i < len; ++i) text += pieces[gen() % pieces.size()];
    check_coverage(text);
  }
}

TEST_CASE("build_vocab thresholds and maps rare terms to unk") {
  const std::vector<AnnotatedDocument> corpus = {{"d1", "a a b", RiskLevel::A, {}}};
  const Vocab v2 = build_vocab(corpus, 2);
  CHECK(v2.size() == 2);
  CHECK(v2.term(Vocab::kUnkId) == Vocab::kUnkTerm);
  CHECK(v2.id("a") != Vocab::kUnkId);
  CHECK(v2.id("b") == Vocab::kUnkId);

  const Vocab v1 = build_vocab(corpus, 1);
  CHECK(v1.size() == 3);
  CHECK(v1.id("b") != Vocab::kUnkId);
  CHECK(v1.id("a") != v1.id("b"));
}

TEST_CASE("build_vocab is deterministic") {
  const std::vector<AnnotatedDocument> corpus = {{"x", "the cat sat on the mat", RiskLevel::A, {}},
                                                 {"y", "a cat and a dog", RiskLevel::B, {}}};
  CHECK(build_vocab(corpus, 1) == build_vocab(corpus, 1));
  const auto ids = build_vocab(corpus, 1).encode(tokenize("the dog flew"));
  REQUIRE(ids.size() == 3);
  CHECK(ids[2] == Vocab::kUnkId);
}

TEST_CASE("extract_ngrams enumerates contiguous grams") {
  const std::string sep(kNgramSeparator);
  const auto grams = extract_ngrams(tokens_of({"a", "b", "c"}));
  CHECK(grams == std::vector<std::string>{"a" + sep + "b", "b" + sep + "c", "a" + sep + "b" + sep + "c"});
  CHECK(extract_ngrams(tokens_of({"a"})).empty());
  CHECK(extract_ngrams(tokens_of({"a", "b", "c", "d", "e"})).size() == 9);
}

TEST_CASE("extract_ngrams count identity") {
  const std::vector<const char*> words = {"w", "x", "y", "z", "v", "u", "t", "s"};
  for (std::size_t len = 0; len <= words.size(); ++len) {
    std::vector<Token> tokens;
    for (std::size_t i = 0; i < len; ++i) tokens.push_back({words[i], 2 * i, 2 * i + 1});
    for (std::size_t lo = 1; lo <= 4; ++lo) {
      for (std::size_t hi = lo; hi <= 5; ++hi) {
        std::size_t expected = 0;
        for (std::size_t n = lo; n <= hi; ++n) expected += len >= n ? len - n + 1 : 0;
        CHECK(extract_ngrams(tokens, lo, hi).size() == expected);
      }
    }
  }
}
