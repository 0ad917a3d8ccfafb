#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "riskspan/types.hpp"

namespace riskspan {

struct TfidfConfig {
  std::size_t n_min = 2;
  std::size_t n_max = 4;
  std::size_t min_df = 2;
};

struct TfidfModel {
  TfidfConfig config;
  std::vector<std::string> terms;  // column order, lexicographic
  std::vector<std::size_t> df;
  std::vector<double> idf;
  std::size_t n_docs = 0;
  std::unordered_map<std::string, std::size_t> columns;

  std::size_t dimension() const { return terms.size(); }
  void rebuild_index();
};

struct SparseVector {
  std::vector<std::pair<std::size_t, double>> entries;  // ascending column

  bool empty() const { return entries.empty(); }
};

/// Smoothed idf: ln((1 + N) / (1 + df)) + 1.
double smoothed_idf(std::size_t n_docs, std::size_t df);

TfidfModel tfidf_fit(std::span<const AnnotatedDocument> corpus, const TfidfConfig& config = {});
/// Raw n-gram counts times idf, L2-normalized. Unseen n-grams are dropped.
SparseVector tfidf_transform(const TfidfModel& tfidf, std::string_view text);

struct LogRegConfig {
  double l2 = 1e-4;
  std::size_t epochs = 300;
  double learning_rate = 2.0;
  std::uint64_t seed = 0;
};

struct LogRegModel {
  std::size_t features = 0;
  std::vector<double> weights;  // [features x 4] row-major
  RiskDistribution bias{};
  LogRegConfig config;
  std::vector<double> loss_history;  // accepted-step losses, first entry at init
};

/// Mean cross-entropy plus (l2 / 2) * ||W||^2 and its gradient.
struct LogRegObjective {
  double loss = 0.0;
  std::vector<double> grad_weights;
  RiskDistribution grad_bias{};
};

LogRegObjective logreg_objective(const LogRegModel& model, std::span<const SparseVector> vectors,
                                 std::span<const RiskLevel> labels, double l2);

/// Deterministic full-batch gradient descent from zero weights. A step that
/// would raise the loss is rejected and the learning rate halved.
LogRegModel logreg_train(std::span<const SparseVector> vectors, std::span<const RiskLevel> labels,
                         std::size_t features, const LogRegConfig& config);

RiskDistribution logreg_predict(const LogRegModel& model, const SparseVector& x);

struct TfidfLrModel {
  TfidfModel tfidf;
  LogRegModel logreg;
};

TfidfLrModel fit_tfidf_lr(std::span<const AnnotatedDocument> corpus, const TfidfConfig& tfidf,
                          const LogRegConfig& logreg);
RiskDistribution predict_tfidf_lr(const TfidfLrModel& model, std::string_view text);

void save_baseline(const TfidfLrModel& model, const std::filesystem::path& path);
TfidfLrModel load_baseline(const std::filesystem::path& path);

}  // namespace riskspan
