#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "riskspan/model.hpp"
#include "riskspan/types.hpp"

namespace riskspan {

/// Probability floor applied before every log.
inline constexpr double kLogClamp = 1e-12;

struct LossBreakdown {
  double lambda = 0.0;
  double l_span = 0.0;
  double l_cls = 0.0;
  double l_total = 0.0;
};

/// Mean negative log-likelihood of the true tags.
double span_loss(std::span<const TagDistribution> p_span, std::span<const BioTag> tags);
double cls_loss(const RiskDistribution& p_cls, RiskLevel y);
/// l_total = lambda * l_span + (1 - lambda) * l_cls. Throws LambdaOutOfRange.
LossBreakdown combined_loss(double l_span, double l_cls, double lambda);

/// One tokenized training document, already truncated to the model's max_len.
struct Example {
  std::vector<std::int32_t> ids;
  TagSequence tags;
  RiskLevel risk = RiskLevel::A;
  double cls_weight = 1.0;
};

Example make_example(const Model& model, const AnnotatedDocument& doc);

/// Mean batch loss and its exact gradient with respect to every parameter.
struct BackwardResult {
  LossBreakdown loss;
  Gradients grads;
};

BackwardResult backward(const Model& model, std::span<const Example> batch, double lambda);
/// Loss only; same value `backward` reports.
LossBreakdown batch_loss(const Model& model, std::span<const Example> batch, double lambda);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;  // "<tensor>[<flat index>]"
  std::size_t checked = 0;
};

/// Central differences on every scalar parameter.
GradCheckReport grad_check(const Model& model, std::span<const Example> batch, double lambda,
                           double eps);

/// Builtin tiny fixture: vocab of 20 terms, d = 8, three documents of at most
/// six tokens. Deterministic for a seed.
struct GradCheckFixture {
  Model model;
  std::vector<Example> batch;
};
GradCheckFixture make_grad_check_fixture(EncoderKind kind, std::uint64_t seed);

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lambda = 0.5;
  std::uint64_t seed = 0;
  bool shuffle = true;
  double grad_clip = 5.0;
  bool class_weighting = false;
  /// Vocabulary frequency threshold used when `train` builds the vocab.
  std::size_t min_count = 2;

  void validate() const;
};

struct TrainResult {
  Model model;
  std::vector<LossBreakdown> history;  // one entry per epoch
};

/// Called after each epoch with (epoch index from 1, epoch mean loss).
using EpochCallback = std::function<void(std::size_t, const LossBreakdown&)>;

TrainResult train(std::span<const AnnotatedDocument> corpus, const ModelConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch = {});

/// Inverse class frequency weights over the given labels, normalized so the
/// per-document mean is 1. Absent classes get weight 0.
std::array<double, kNumRiskLevels> inverse_frequency_weights(std::span<const RiskLevel> labels);

/// {"epoch", "lambda", "l_span", "l_cls", "l_total"} per line.
void write_history(std::span<const LossBreakdown> history, std::ostream& out);

struct LambdaScore {
  double lambda = 0.0;
  double span_f1 = 0.0;
  double risk_macro_f1 = 0.0;
  double score = 0.0;  // mean of the two
};

struct LambdaSearch {
  double best_lambda = 0.5;
  std::vector<LambdaScore> table;  // grid order
};

inline const std::vector<double> kDefaultLambdaGrid = {0.0, 0.25, 0.5, 0.75, 1.0};

/// Trains one model per grid value on a stratified train split and scores it
/// on the held-out dev split. Ties prefer lambda nearest 0.5, then smaller.
LambdaSearch tune_lambda(std::span<const AnnotatedDocument> corpus, std::span<const double> grid,
                         const ModelConfig& model_config, const TrainConfig& train_config,
                         double dev_fraction = 0.2);

}  // namespace riskspan
