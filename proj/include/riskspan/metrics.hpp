#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "riskspan/decode.hpp"
#include "riskspan/model.hpp"
#include "riskspan/types.hpp"

namespace riskspan {

enum class SpanMatchMode { Exact, Overlap };

std::string_view mode_name(SpanMatchMode mode);
/// "exact" or "overlap"; throws InvalidArgument otherwise.
SpanMatchMode parse_mode(std::string_view name);

inline double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

struct SpanScore {
  SpanMatchMode mode = SpanMatchMode::Exact;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // exact mode
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  // overlap mode, in codepoints
  std::size_t matched_mass = 0;
  std::size_t pred_mass = 0;
  std::size_t gold_mass = 0;
};

/// Micro-averaged span scores; `pred[i]` and `gold[i]` belong to the same doc.
/// Matching is one-to-one in both modes. Overlap mode pairs spans greedily by
/// descending shared codepoints.
SpanScore span_prf(std::span<const std::vector<CharSpan>> pred,
                   std::span<const std::vector<CharSpan>> gold, SpanMatchMode mode);

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  std::optional<double> auc;  // unset when the class is absent on one side
};

struct ClsScore {
  std::size_t n = 0;
  double accuracy = 0.0;
  std::array<ClassScore, kNumRiskLevels> per_class{};
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::optional<double> macro_auc;
  std::vector<RiskLevel> absent_classes;  // zero gold support
};

ClsScore cls_scores(std::span<const RiskLevel> preds, std::span<const RiskDistribution> probs,
                    std::span<const RiskLevel> gold);
/// Aligns by id; throws IdMismatch naming the offending ids.
ClsScore cls_scores(std::span<const Prediction> preds, std::span<const AnnotatedDocument> gold);

/// One-vs-rest rank statistic P(s+ > s-) + P(s+ = s-)/2 computed from sorted
/// scores with exact integer pair counts. nullopt without both sides.
std::optional<double> auc_one_vs_rest(std::span<const double> scores, std::span<const bool> positive);

/// Sum of per-gold-token best cosine similarities and the gold token count.
struct MatchRecallAccumulator {
  double sum = 0.0;
  std::size_t gold_tokens = 0;

  /// Corpus-level recall; vacuously 1 with no gold tokens.
  double value() const { return gold_tokens == 0 ? 1.0 : sum / static_cast<double>(gold_tokens); }
};

void accumulate_match_recall(std::span<const TokenSpan> pred, std::span<const TokenSpan> gold,
                             const Tensor& states, MatchRecallAccumulator& acc);

/// For each gold-span token, the best cosine similarity (floored at 0) to any
/// predicted-span token; averaged over gold tokens.
double embedding_match_recall(std::span<const TokenSpan> pred, std::span<const TokenSpan> gold,
                              const Tensor& states);

struct BenchReport {
  std::size_t repetitions = 0;
  std::size_t documents = 0;
  double mean_latency_s = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  std::vector<double> per_instance;  // repetition-major
};

/// Times `extract` per document after one untimed warm-up pass. Throws
/// NondeterministicOutput if any repetition disagrees with the warm-up.
BenchReport bench_inference(const Model& model, std::span<const AnnotatedDocument> corpus,
                            std::size_t repetitions);

/// Nearest-rank percentile, q in [0, 1].
double percentile(std::vector<double> values, double q);

}  // namespace riskspan
