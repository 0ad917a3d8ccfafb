#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "riskspan/types.hpp"

namespace riskspan {

// ---------------------------------------------------------------------------
// JSONL ingestion
// ---------------------------------------------------------------------------

/// Reads a JSON Lines corpus. Blank lines are skipped; errors carry the
/// 1-based line number. Spans are sorted by (start, end) on load.
std::vector<AnnotatedDocument> load_corpus(const std::filesystem::path& path);
std::vector<AnnotatedDocument> read_corpus(std::istream& in);

void write_corpus(std::span<const AnnotatedDocument> corpus, std::ostream& out);
void write_corpus(std::span<const AnnotatedDocument> corpus, const std::filesystem::path& path);

/// Serializes one document as a single JSON line (no trailing newline).
std::string to_jsonl_line(const AnnotatedDocument& doc);

// ---------------------------------------------------------------------------
// Span alignment
// ---------------------------------------------------------------------------

/// Merges spans that share at least one codepoint. Adjacent spans
/// (a.end == b.start) stay separate. Merged spans drop their labels unless
/// all members agree.
std::vector<CharSpan> merge_overlapping(std::span<const CharSpan> spans);

/// Token ranges covered by the given char spans. A token belongs to a span if
/// it overlaps it by at least one codepoint; ranges sharing a token are merged
/// and spans touching no token are dropped.
std::vector<TokenSpan> char_to_token_spans(std::span<const CharSpan> spans,
                                           std::span<const Token> tokens);

/// BIO projection of the document's gold spans onto `tokens`.
TagSequence project_spans_to_bio(const AnnotatedDocument& doc, std::span<const Token> tokens);

// ---------------------------------------------------------------------------
// Cross-validation folds
// ---------------------------------------------------------------------------

struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::string> ids;    // corpus order
  std::vector<std::size_t> folds;  // folds[i] is the fold of ids[i]

  std::size_t fold_of(const std::string& id) const;
  /// Corpus indices in fold `f`, ascending.
  std::vector<std::size_t> members(std::size_t f) const;
  std::vector<std::size_t> complement(std::size_t f) const;
};

/// Stratified by risk level: per-class counts per fold differ by at most 1,
/// and so do fold sizes.
FoldAssignment kfold_split(std::span<const AnnotatedDocument> corpus, std::size_t k,
                           std::uint64_t seed);

/// Stratified holdout: returns (train indices, dev indices), each ascending.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    std::span<const AnnotatedDocument> corpus, double dev_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

inline constexpr std::string_view kMildLabel = "mild";
inline constexpr std::string_view kModerateLabel = "moderate";
inline constexpr std::string_view kSevereLabel = "severe";

struct GenConfig {
  std::size_t count = 2000;
  std::vector<std::string> mild;
  std::vector<std::string> moderate;
  std::vector<std::string> severe;
  std::vector<std::string> filler;
  /// Target class proportions for (a, b, c, d); normalized internally.
  std::array<double, kNumRiskLevels> class_weights = {0.4, 0.25, 0.2, 0.15};
  std::size_t min_filler = 6;
  std::size_t max_filler = 18;

  /// Built-in lexicons and filler vocabulary.
  static GenConfig defaults();
};

/// Risk implied by the marker labels planted in a document: any severe -> d,
/// else any moderate -> c, else any mild -> b, else a.
RiskLevel risk_from_markers(std::span<const CharSpan> spans);

std::vector<AnnotatedDocument> generate_synthetic(const GenConfig& config, std::uint64_t seed);

/// Stable 64-bit FNV-1a, used for lexicon and corpus fingerprints.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);
std::uint64_t lexicon_hash(const GenConfig& config);

}  // namespace riskspan
