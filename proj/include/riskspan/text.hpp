#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "riskspan/types.hpp"

namespace riskspan {

/// Runs of alphanumeric codepoints form one token; every other non-space
/// codepoint is a token by itself. Offsets are codepoints into `text`.
std::vector<Token> tokenize(std::string_view text);

class Vocab {
public:
  static constexpr std::int32_t kUnkId = 0;
  static constexpr std::string_view kUnkTerm = "<unk>";

  Vocab();
  /// Rebuilds from an id-ordered term list; terms[0] must be the UNK term.
  explicit Vocab(std::vector<std::string> terms, std::size_t min_count = 1);

  std::int32_t id(std::string_view term) const;
  const std::string& term(std::int32_t id) const { return terms_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return terms_.size(); }
  std::size_t min_count() const { return min_count_; }
  const std::vector<std::string>& terms() const { return terms_; }

  std::vector<std::int32_t> encode(std::span<const Token> tokens) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.terms_ == b.terms_; }

private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::size_t min_count_ = 1;
};

/// Terms with corpus frequency >= min_count, ordered by descending frequency
/// and then lexicographically, after the UNK entry at id 0.
Vocab build_vocab(std::span<const AnnotatedDocument> corpus, std::size_t min_count);

/// Separator between n-gram members (U+241F).
inline constexpr std::string_view kNgramSeparator = "\xE2\x90\x9F";

/// All contiguous n-grams for n in [n_min, n_max], grouped by n then position.
std::vector<std::string> extract_ngrams(std::span<const Token> tokens, std::size_t n_min = 2,
                                        std::size_t n_max = 4);

}  // namespace riskspan
