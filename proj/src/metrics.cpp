#include "riskspan/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <unordered_map>

#include "riskspan/error.hpp"

namespace riskspan {

std::string_view mode_name(SpanMatchMode mode) { return mode == SpanMatchMode::Exact ? "exact" : "overlap"; }

SpanMatchMode parse_mode(std::string_view name) {
  if (name == "exact") return SpanMatchMode::Exact;
  if (name == "overlap") return SpanMatchMode::Overlap;
  throw Error(ErrorCode::InvalidArgument, "unknown span match mode '" + std::string(name) + "'");
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::size_t overlap(const CharSpan& a, const CharSpan& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  return hi > lo ? hi - lo : 0;
}

std::size_t exact_matches(const std::vector<CharSpan>& pred, const std::vector<CharSpan>& gold) {
  std::vector<std::pair<std::size_t, std::size_t>> p, g;
  for (const auto& s : pred) p.emplace_back(s.start, s.end);
  for (const auto& s : gold) g.emplace_back(s.start, s.end);
  std::sort(p.begin(), p.end());
  std::sort(g.begin(), g.end());
  // Multiset intersection is a maximum one-to-one matching on identical keys.
  std::size_t matched = 0;
  auto pi = p.begin();
  auto gi = g.begin();
  while (pi != p.end() && gi != g.end()) {
    if (*pi < *gi) {
      ++pi;
    } else if (*gi < *pi) {
      ++gi;
    } else {
      ++matched, ++pi, ++gi;
    }
  }
  return matched;
}

std::size_t greedy_overlap_mass(const std::vector<CharSpan>& pred, const std::vector<CharSpan>& gold) {
  struct Pair {
    std::size_t mass, p, g;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < gold.size(); ++j) {
      if (const std::size_t m = overlap(pred[i], gold[j]); m > 0) pairs.push_back({m, i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.mass != b.mass) return a.mass > b.mass;
    return a.p != b.p ? a.p < b.p : a.g < b.g;
  });
  std::vector<bool> used_p(pred.size()), used_g(gold.size());
  std::size_t total = 0;
  for (const Pair& pr : pairs) {
    if (used_p[pr.p] || used_g[pr.g]) continue;
    used_p[pr.p] = used_g[pr.g] = true;
    total += pr.mass;
  }
  return total;
}

}  // namespace

SpanScore span_prf(std::span<const std::vector<CharSpan>> pred, std::span<const std::vector<CharSpan>> gold,
                   SpanMatchMode mode) {
  if (pred.size() != gold.size()) {
    throw Error(ErrorCode::LengthMismatch, "span_prf needs one predicted and one gold list per document");
  }
  SpanScore s;
  s.mode = mode;
  std::size_t n_pred = 0, n_gold = 0;
  for (std::size_t d = 0; d < pred.size(); ++d) {
    n_pred += pred[d].size();
    n_gold += gold[d].size();
    for (const auto& sp : pred[d]) s.pred_mass += sp.length();
    for (const auto& sp : gold[d]) s.gold_mass += sp.length();
    if (mode == SpanMatchMode::Exact) {
      s.tp += exact_matches(pred[d], gold[d]);
    } else {
      s.matched_mass += greedy_overlap_mass(pred[d], gold[d]);
    }
  }
  if (mode == SpanMatchMode::Exact) {
    s.fp = n_pred - s.tp;
    s.fn = n_gold - s.tp;
    s.precision = ratio(s.tp, n_pred);
    s.recall = ratio(s.tp, n_gold);
  } else {
    s.precision = ratio(s.matched_mass, s.pred_mass);
    s.recall = ratio(s.matched_mass, s.gold_mass);
  }
  s.f1 = f1_score(s.precision, s.recall);
  return s;
}

std::optional<double> auc_one_vs_rest(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney U: each (pos, neg) pair adds 2 for a win, 1 for a tie.
  std::uint64_t u2 = 0, neg_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (positive[order[j]] ? pos : neg) += 1;
      ++j;
    }
    u2 += 2 * pos * neg_below + pos * neg;
    neg_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  return static_cast<double>(u2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ClsScore cls_scores(std::span<const RiskLevel> preds, std::span<const RiskDistribution> probs,
                    std::span<const RiskLevel> gold) {
  if (gold.empty()) throw Error(ErrorCode::EmptyInput, "no documents to score");
  if (preds.size() != gold.size() || probs.size() != gold.size()) {
    throw Error(ErrorCode::LengthMismatch, "predictions, probabilities and gold labels differ in length");
  }
  ClsScore s;
  s.n = gold.size();
  std::array<std::size_t, kNumRiskLevels> tp{}, predicted{};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto g = index_of(gold[i]);
    const auto p = index_of(preds[i]);
    ++s.per_class[g].support;
    ++predicted[p];
    if (g == p) {
      ++tp[g];
      ++correct;
    }
  }
  s.accuracy = ratio(correct, s.n);

  double auc_sum = 0.0;
  std::size_t auc_classes = 0;
  std::vector<double> scores(gold.size());
  std::unique_ptr<bool[]> positive(new bool[gold.size()]);
  for (RiskLevel r : kAllRiskLevels) {
    const auto k = index_of(r);
    ClassScore& c = s.per_class[k];
    c.precision = ratio(tp[k], predicted[k]);
    c.recall = ratio(tp[k], c.support);
    c.f1 = f1_score(c.precision, c.recall);
    if (c.support == 0) s.absent_classes.push_back(r);
    s.macro_precision += c.precision / kNumRiskLevels;
    s.macro_recall += c.recall / kNumRiskLevels;
    s.macro_f1 += c.f1 / kNumRiskLevels;
    s.weighted_f1 += static_cast<double>(c.support) / static_cast<double>(s.n) * c.f1;

    for (std::size_t i = 0; i < gold.size(); ++i) {
      scores[i] = probs[i][k];
      positive[i] = gold[i] == r;
    }
    c.auc = auc_one_vs_rest(scores, std::span<const bool>(positive.get(), gold.size()));
    if (c.auc) {
      auc_sum += *c.auc;
      ++auc_classes;
    }
  }
  if (auc_classes > 0) s.macro_auc = auc_sum / static_cast<double>(auc_classes);
  return s;
}

ClsScore cls_scores(std::span<const Prediction> preds, std::span<const AnnotatedDocument> gold) {
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const auto& p : preds) by_id.emplace(p.id, &p);
  std::vector<std::string> missing;
  std::vector<RiskLevel> pred_levels, gold_levels;
  std::vector<RiskDistribution> probs;
  for (const auto& doc : gold) {
    const auto it = by_id.find(doc.id);
    if (it == by_id.end()) {
      missing.push_back(doc.id);
      continue;
    }
    pred_levels.push_back(it->second->risk_pred);
    probs.push_back(it->second->risk_probs);
    gold_levels.push_back(doc.risk);
    by_id.erase(it);
  }
  if (!missing.empty() || !by_id.empty()) {
    std::vector<std::string> extra;
    for (const auto& [id, p] : by_id) extra.push_back(id);
    std::sort(extra.begin(), extra.end());
    std::string msg = "prediction/gold id mismatch;";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + ids[i];
      if (ids.size() > 20) msg += " ... (" + std::to_string(ids.size()) + " total)";
    };
    list("missing predictions for", missing);
    list("predictions without gold", extra);
    throw Error(ErrorCode::IdMismatch, msg);
  }
  return cls_scores(pred_levels, probs, gold_levels);
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

}  // namespace

void accumulate_match_recall(std::span<const TokenSpan> pred, std::span<const TokenSpan> gold, const Tensor& states,
                             MatchRecallAccumulator& acc) {
  auto check = [&](const TokenSpan& s) {
    if (s.start > s.end || s.end >= states.rows()) {
      throw Error(ErrorCode::IndexOutOfRange, "span outside the representation matrix");
    }
  };
  std::vector<std::size_t> pred_tokens;
  for (const auto& s : pred) {
    check(s);
    for (std::size_t i = s.start; i <= s.end; ++i) pred_tokens.push_back(i);
  }
  for (const auto& s : gold) {
    check(s);
    for (std::size_t g = s.start; g <= s.end; ++g) {
      const auto row = states.row(g);
      const bool zero_g = std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; });
      double best = 0.0;
      for (std::size_t p : pred_tokens) {
        best = std::max(best, p == g && !zero_g ? 1.0 : cosine(states.row(g), states.row(p)));
      }
      acc.sum += best;
      ++acc.gold_tokens;
    }
  }
}

double embedding_match_recall(std::span<const TokenSpan> pred, std::span<const TokenSpan> gold, const Tensor& states) {
  MatchRecallAccumulator acc;
  accumulate_match_recall(pred, gold, states, acc);
  return acc.value();
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(q * static_cast<double>(values.size()));
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
  return values[idx];
}

BenchReport bench_inference(const Model& model, std::span<const AnnotatedDocument> corpus, std::size_t repetitions) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot benchmark on an empty corpus");
  if (repetitions < 3) throw Error(ErrorCode::InvalidArgument, "bench needs at least 3 repetitions");
  std::vector<Prediction> reference;
  reference.reserve(corpus.size());
  for (const auto& doc : corpus) reference.push_back(extract(model, doc));

  BenchReport r;
  r.repetitions = repetitions;
  r.documents = corpus.size();
  r.per_instance.reserve(repetitions * corpus.size());
  using clock = std::chrono::steady_clock;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto t0 = clock::now();
      Prediction p = extract(model, corpus[i]);
      const auto t1 = clock::now();
      if (!(p == reference[i])) {
        throw Error(ErrorCode::NondeterministicOutput,
                    "extraction for '" + corpus[i].id + "' changed in repetition " + std::to_string(rep + 1));
      }
      r.per_instance.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
  }
  r.mean_latency_s = std::accumulate(r.per_instance.begin(), r.per_instance.end(), 0.0) /
                     static_cast<double>(r.per_instance.size());
  r.p50 = percentile(r.per_instance, 0.50);
  r.p95 = percentile(r.per_instance, 0.95);
  return r;
}

}  // namespace riskspan
