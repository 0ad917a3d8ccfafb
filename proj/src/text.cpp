#include "riskspan/text.hpp"

#include <algorithm>
#include <map>

#include "riskspan/error.hpp"
#include "riskspan/unicode.hpp"

namespace riskspan {

std::vector<Token> tokenize(std::string_view text) {
  const std::u32string cps = unicode::decode_utf8(text);
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < cps.size()) {
    const char32_t cp = cps[i];
    if (unicode::is_space(cp)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (unicode::is_alnum(cp)) {
      while (j < cps.size() && unicode::is_alnum(cps[j])) ++j;
    }
    std::u32string lowered(cps.begin() + static_cast<std::ptrdiff_t>(i),
                           cps.begin() + static_cast<std::ptrdiff_t>(j));
    std::transform(lowered.begin(), lowered.end(), lowered.begin(), unicode::to_lower);
    tokens.push_back(Token{unicode::encode_utf8(lowered), i, j});
    i = j;
  }
  return tokens;
}

Vocab::Vocab() : Vocab(std::vector<std::string>{std::string(kUnkTerm)}) {}

Vocab::Vocab(std::vector<std::string> terms, std::size_t min_count)
    : terms_(std::move(terms)), min_count_(min_count) {
  if (terms_.empty() || terms_.front() != kUnkTerm) {
    throw Error(ErrorCode::InvalidArgument, "vocabulary must start with the UNK term");
  }
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (!index_.emplace(terms_[i], static_cast<std::int32_t>(i)).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate vocabulary term '" + terms_[i] + "'");
    }
  }
}

std::int32_t Vocab::id(std::string_view term) const {
  const auto it = index_.find(std::string(term));
  return it == index_.end() ? kUnkId : it->second;
}

std::vector<std::int32_t> Vocab::encode(std::span<const Token> tokens) const {
  std::vector<std::int32_t> ids;
  ids.reserve(tokens.size());
  for (const Token& t : tokens) ids.push_back(id(t.surface));
  return ids;
}

Vocab build_vocab(std::span<const AnnotatedDocument> corpus, std::size_t min_count) {
  if (min_count < 1) throw Error(ErrorCode::InvalidArgument, "min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus) {
    for (const auto& tok : tokenize(doc.text)) ++counts[tok.surface];
  }
  counts.erase(std::string(Vocab::kUnkTerm));
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [term, n] : counts) {
    if (n >= min_count) kept.emplace_back(term, n);
  }
  // std::map iteration is already lexicographic; stable sort keeps that order on ties.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> terms;
  terms.reserve(kept.size() + 1);
  terms.emplace_back(Vocab::kUnkTerm);
  for (auto& [term, n] : kept) terms.push_back(term);
  return Vocab(std::move(terms), min_count);
}

std::vector<std::string> extract_ngrams(std::span<const Token> tokens, std::size_t n_min,
                                        std::size_t n_max) {
  if (n_min == 0 || n_min > n_max) {
    throw Error(ErrorCode::InvalidArgument, "n-gram range requires 1 <= n_min <= n_max");
  }
  std::vector<std::string> grams;
  for (std::size_t n = n_min; n <= n_max && n <= tokens.size(); ++n) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string g = tokens[i].surface;
      for (std::size_t k = 1; k < n; ++k) {
        g += kNgramSeparator;
        g += tokens[i + k].surface;
      }
      grams.push_back(std::move(g));
    }
  }
  return grams;
}

}  // namespace riskspan
