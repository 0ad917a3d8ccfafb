#include "riskspan/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "riskspan/error.hpp"
#include "riskspan/model.hpp"
#include "riskspan/text.hpp"

namespace riskspan {

void TfidfModel::rebuild_index() {
  columns.clear();
  for (std::size_t i = 0; i < terms.size(); ++i) columns.emplace(terms[i], i);
}

double smoothed_idf(std::size_t n_docs, std::size_t df) {
  return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(df))) + 1.0;
}

TfidfModel tfidf_fit(std::span<const AnnotatedDocument> corpus, const TfidfConfig& config) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot fit TF-IDF on an empty corpus");
  if (config.min_df == 0) throw Error(ErrorCode::InvalidArgument, "min_df must be >= 1");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    const auto grams = extract_ngrams(tokenize(doc.text), config.n_min, config.n_max);
    for (const auto& g : std::set<std::string>(grams.begin(), grams.end())) ++df[g];
  }
  TfidfModel m;
  m.config = config;
  m.n_docs = corpus.size();
  for (const auto& [term, count] : df) {
    if (count < config.min_df) continue;
    m.terms.push_back(term);
    m.df.push_back(count);
    m.idf.push_back(smoothed_idf(m.n_docs, count));
  }
  m.rebuild_index();
  return m;
}

SparseVector tfidf_transform(const TfidfModel& tfidf, std::string_view text) {
  std::map<std::size_t, double> counts;
  for (const auto& g : extract_ngrams(tokenize(text), tfidf.config.n_min, tfidf.config.n_max)) {
    if (const auto it = tfidf.columns.find(g); it != tfidf.columns.end()) counts[it->second] += 1.0;
  }
  SparseVector v;
  double norm_sq = 0.0;
  for (const auto& [col, tf] : counts) {
    const double w = tf * tfidf.idf[col];
    v.entries.emplace_back(col, w);
    norm_sq += w * w;
  }
  if (norm_sq > 0.0) {
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& e : v.entries) e.second *= inv;
  }
  return v;
}

namespace {

RiskDistribution logits_for(const LogRegModel& model, const SparseVector& x) {
  RiskDistribution z = model.bias;
  for (const auto& [col, val] : x.entries) {
    if (col >= model.features) {
      throw Error(ErrorCode::DimensionMismatch, "feature column " + std::to_string(col) + " outside model with " +
                                                    std::to_string(model.features) + " features");
    }
    for (std::size_t k = 0; k < kNumRiskLevels; ++k) z[k] += val * model.weights[col * kNumRiskLevels + k];
  }
  return z;
}

void check_inputs(std::span<const SparseVector> vectors, std::span<const RiskLevel> labels) {
  if (vectors.size() != labels.size()) {
    throw Error(ErrorCode::DimensionMismatch, "vectors and labels differ in length");
  }
  if (vectors.empty()) throw Error(ErrorCode::EmptyInput, "no training vectors");
}

}  // namespace

LogRegObjective logreg_objective(const LogRegModel& model, std::span<const SparseVector> vectors,
                                 std::span<const RiskLevel> labels, double l2) {
  check_inputs(vectors, labels);
  LogRegObjective obj;
  obj.grad_weights.assign(model.weights.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    RiskDistribution p = logits_for(model, vectors[i]);
    softmax_inplace(p);
    const auto y = index_of(labels[i]);
    obj.loss += -std::log(std::max(p[y], 1e-300)) * inv_n;
    for (std::size_t k = 0; k < kNumRiskLevels; ++k) {
      const double g = (p[k] - (k == y ? 1.0 : 0.0)) * inv_n;
      obj.grad_bias[k] += g;
      for (const auto& [col, val] : vectors[i].entries) obj.grad_weights[col * kNumRiskLevels + k] += val * g;
    }
  }
  double w_sq = 0.0;
  for (std::size_t j = 0; j < model.weights.size(); ++j) {
    w_sq += model.weights[j] * model.weights[j];
    obj.grad_weights[j] += l2 * model.weights[j];
  }
  obj.loss += 0.5 * l2 * w_sq;
  return obj;
}

LogRegModel logreg_train(std::span<const SparseVector> vectors, std::span<const RiskLevel> labels,
                         std::size_t features, const LogRegConfig& config) {
  check_inputs(vectors, labels);
  if (!(config.learning_rate > 0.0) || !(config.l2 >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "logistic regression needs lr > 0 and l2 >= 0");
  }
  LogRegModel model;
  model.features = features;
  model.weights.assign(features * kNumRiskLevels, 0.0);
  model.config = config;

  double lr = config.learning_rate;
  LogRegObjective current = logreg_objective(model, vectors, labels, config.l2);
  model.loss_history.push_back(current.loss);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    while (lr > 1e-12) {
      LogRegModel candidate = model;
      for (std::size_t j = 0; j < candidate.weights.size(); ++j) candidate.weights[j] -= lr * current.grad_weights[j];
      for (std::size_t k = 0; k < kNumRiskLevels; ++k) candidate.bias[k] -= lr * current.grad_bias[k];
      LogRegObjective next = logreg_objective(candidate, vectors, labels, config.l2);
      if (next.loss <= current.loss) {
        model.weights = std::move(candidate.weights);
        model.bias = candidate.bias;
        current = std::move(next);
        model.loss_history.push_back(current.loss);
        break;
      }
      lr *= 0.5;
    }
  }
  return model;
}

RiskDistribution logreg_predict(const LogRegModel& model, const SparseVector& x) {
  RiskDistribution p = logits_for(model, x);
  softmax_inplace(p);
  return p;
}

TfidfLrModel fit_tfidf_lr(std::span<const AnnotatedDocument> corpus, const TfidfConfig& tfidf,
                          const LogRegConfig& logreg) {
  TfidfLrModel m;
  m.tfidf = tfidf_fit(corpus, tfidf);
  std::vector<SparseVector> vectors;
  std::vector<RiskLevel> labels;
  for (const auto& doc : corpus) {
    vectors.push_back(tfidf_transform(m.tfidf, doc.text));
    labels.push_back(doc.risk);
  }
  m.logreg = logreg_train(vectors, labels, m.tfidf.dimension(), logreg);
  return m;
}

RiskDistribution predict_tfidf_lr(const TfidfLrModel& model, std::string_view text) {
  return logreg_predict(model.logreg, tfidf_transform(model.tfidf, text));
}

void save_baseline(const TfidfLrModel& model, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format_version"] = "1";
  j["kind"] = "tfidf-lr";
  nlohmann::ordered_json tf;
  tf["n_min"] = model.tfidf.config.n_min;
  tf["n_max"] = model.tfidf.config.n_max;
  tf["min_df"] = model.tfidf.config.min_df;
  tf["n_docs"] = model.tfidf.n_docs;
  tf["terms"] = model.tfidf.terms;
  tf["df"] = model.tfidf.df;
  j["tfidf"] = std::move(tf);
  nlohmann::ordered_json lr;
  lr["features"] = model.logreg.features;
  lr["l2"] = model.logreg.config.l2;
  lr["epochs"] = model.logreg.config.epochs;
  lr["learning_rate"] = model.logreg.config.learning_rate;
  lr["seed"] = model.logreg.config.seed;
  lr["weights"] = model.logreg.weights;
  lr["bias"] = model.logreg.bias;
  j["logreg"] = std::move(lr);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write baseline model " + path.string());
  out << j.dump() << '\n';
}

TfidfLrModel load_baseline(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open baseline model " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format_version") != "1") throw Error(ErrorCode::UnsupportedVersion, "unsupported baseline format_version");
    if (j.at("kind") != "tfidf-lr") throw Error(ErrorCode::MalformedModel, "not a tfidf-lr model");
    TfidfLrModel m;
    const auto& tf = j.at("tfidf");
    m.tfidf.config = {tf.at("n_min").get<std::size_t>(), tf.at("n_max").get<std::size_t>(),
                      tf.at("min_df").get<std::size_t>()};
    m.tfidf.n_docs = tf.at("n_docs").get<std::size_t>();
    m.tfidf.terms = tf.at("terms").get<std::vector<std::string>>();
    m.tfidf.df = tf.at("df").get<std::vector<std::size_t>>();
    if (m.tfidf.df.size() != m.tfidf.terms.size()) throw Error(ErrorCode::ShapeMismatch, "df length disagrees with terms");
    for (std::size_t df : m.tfidf.df) m.tfidf.idf.push_back(smoothed_idf(m.tfidf.n_docs, df));
    m.tfidf.rebuild_index();
    const auto& lr = j.at("logreg");
    m.logreg.features = lr.at("features").get<std::size_t>();
    m.logreg.config = {lr.at("l2").get<double>(), lr.at("epochs").get<std::size_t>(),
                       lr.at("learning_rate").get<double>(), lr.at("seed").get<std::uint64_t>()};
    m.logreg.weights = lr.at("weights").get<std::vector<double>>();
    m.logreg.bias = lr.at("bias").get<RiskDistribution>();
    if (m.logreg.features != m.tfidf.dimension() || m.logreg.weights.size() != m.logreg.features * kNumRiskLevels) {
      throw Error(ErrorCode::ShapeMismatch, "logistic regression weights disagree with the TF-IDF vocabulary");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedModel, e.what());
  }
}

}  // namespace riskspan
