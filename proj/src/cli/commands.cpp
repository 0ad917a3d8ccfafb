#include "riskspan/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "riskspan/baseline.hpp"
#include "riskspan/corpus.hpp"
#include "riskspan/decode.hpp"
#include "riskspan/error.hpp"
#include "riskspan/kernels.hpp"
#include "riskspan/learning.hpp"
#include "riskspan/metrics.hpp"
#include "riskspan/model.hpp"
#include "riskspan/text.hpp"

namespace riskspan::cli {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

// Usage problems found after CLI11 parsing (bad config keys, flag combos).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// small I/O helpers

std::string read_file(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, std::string("cannot open ") + what + " " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void emit(const std::string& out_path, const std::string& content, std::ostream& out) {
  if (out_path.empty()) {
    out << content;
  } else {
    write_file(out_path, content);
  }
}

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError("invalid --grid value '" + item + "'");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos) throw UsageError("invalid --grid value '" + item + "'");
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("--grid values must lie in [0, 1]");
    grid.push_back(v);
  }
  if (grid.empty()) throw UsageError("--grid is empty");
  return grid;
}

// ---------------------------------------------------------------------------
// report blocks

ojson span_json(const SpanScore& s) {
  ojson j;
  j["precision"] = s.precision;
  j["recall"] = s.recall;
  j["f1"] = s.f1;
  if (s.mode == SpanMatchMode::Exact) {
    j["tp"] = s.tp;
    j["fp"] = s.fp;
    j["fn"] = s.fn;
    // Spans carry no type, so class-weighting has nothing to weight.
    j["weighted_f1"] = s.f1;
    j["weighted_f1_is_micro"] = true;
  } else {
    j["matched_mass"] = s.matched_mass;
    j["pred_mass"] = s.pred_mass;
    j["gold_mass"] = s.gold_mass;
  }
  return j;
}

ojson cls_json(const ClsScore& s) {
  ojson j;
  j["n"] = s.n;
  j["accuracy"] = s.accuracy;
  j["macro_precision"] = s.macro_precision;
  j["macro_recall"] = s.macro_recall;
  j["macro_f1"] = s.macro_f1;
  j["weighted_f1"] = s.weighted_f1;
  j["macro_auc"] = opt(s.macro_auc);
  ojson absent = ojson::array();
  for (RiskLevel r : s.absent_classes) absent.push_back(std::string(1, risk_char(r)));
  j["absent_classes"] = std::move(absent);
  ojson per = ojson::object();
  for (RiskLevel r : kAllRiskLevels) {
    const ClassScore& c = s.per_class[index_of(r)];
    ojson cj;
    cj["precision"] = c.precision;
    cj["recall"] = c.recall;
    cj["f1"] = c.f1;
    cj["support"] = c.support;
    cj["auc"] = opt(c.auc);
    per[std::string(1, risk_char(r))] = std::move(cj);
  }
  j["per_class"] = std::move(per);
  return j;
}

ojson bench_json(const BenchReport& b) {
  ojson j;
  j["repetitions"] = b.repetitions;
  j["documents"] = b.documents;
  j["samples"] = b.per_instance.size();
  j["mean_latency_s"] = b.mean_latency_s;
  j["p50"] = b.p50;
  j["p95"] = b.p95;
  j["outputs_identical"] = true;
  j["per_instance"] = b.per_instance;
  return j;
}

std::vector<std::vector<CharSpan>> pred_char_spans(std::span<const Prediction> preds) {
  std::vector<std::vector<CharSpan>> out;
  for (const auto& p : preds) {
    auto& v = out.emplace_back();
    for (const auto& s : p.spans) v.push_back(s.span);
  }
  return out;
}

std::vector<std::vector<CharSpan>> gold_char_spans(std::span<const AnnotatedDocument> docs) {
  std::vector<std::vector<CharSpan>> out;
  for (const auto& d : docs) out.push_back(merge_overlapping(d.gold_spans));
  return out;
}

// Embedding-match recall over the evaluated model's own token states.
double corpus_match_recall(const Model& model, std::span<const AnnotatedDocument> docs,
                           std::span<const Prediction> preds) {
  MatchRecallAccumulator acc;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto tokens = tokenize(docs[i].text);
    if (tokens.empty()) continue;
    tokens.resize(std::min(tokens.size(), model.config.max_len));
    const ModelOutput out = forward(model, tokens);
    std::vector<CharSpan> pred;
    for (const auto& s : preds[i].spans) pred.push_back(s.span);
    accumulate_match_recall(char_to_token_spans(pred, tokens), char_to_token_spans(docs[i].gold_spans, tokens),
                            out.states, acc);
  }
  return acc.value();
}

// Predictions reordered to follow the gold corpus; throws IdMismatch.
std::vector<Prediction> align_predictions(std::span<const Prediction> preds, std::span<const AnnotatedDocument> gold) {
  cls_scores(preds, gold);  // validates the id sets
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : preds) by_id.emplace(p.id, &p);
  std::vector<Prediction> aligned;
  for (const auto& d : gold) aligned.push_back(*by_id.at(d.id));
  return aligned;
}

bool is_baseline_file(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    return j.is_object() && j.value("kind", std::string()) == "tfidf-lr";
  } catch (const nlohmann::json::exception&) {
    return false;
  }
}

Prediction baseline_prediction(const TfidfLrModel& model, const AnnotatedDocument& doc) {
  Prediction p;
  p.id = doc.id;
  p.risk_probs = predict_tfidf_lr(model, doc.text);
  p.risk_pred = argmax_risk(p.risk_probs);
  return p;
}

GenConfig gen_config_from_json(const fs::path& path) {
  GenConfig c = GenConfig::defaults();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path, "generator config"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedJson, "generator config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::MalformedJson, "generator config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "mild") c.mild = value.get<std::vector<std::string>>();
      else if (key == "moderate") c.moderate = value.get<std::vector<std::string>>();
      else if (key == "severe") c.severe = value.get<std::vector<std::string>>();
      else if (key == "filler") c.filler = value.get<std::vector<std::string>>();
      else if (key == "class_weights") c.class_weights = value.get<std::array<double, kNumRiskLevels>>();
      else if (key == "min_filler") c.min_filler = value.get<std::size_t>();
      else if (key == "max_filler") c.max_filler = value.get<std::size_t>();
      else throw UsageError("unknown generator config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedJson, "generator config: " + std::string(e.what()));
  }
  return c;
}

// ---------------------------------------------------------------------------
// option bundles

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool quiet = false;
  std::string kernels = "auto";
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config, "JSON file of option values; flags on the command line win");
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
  cmd->add_option("--seed", c.seed, "Seed for every random draw");
  cmd->add_flag("--quiet", c.quiet, "Suppress progress output");
  cmd->add_option("--kernels", c.kernels, "Dense kernel set")->check(CLI::IsMember({"auto", "scalar", "avx2"}));
}

struct ModelFlags {
  ModelConfig model;
  TrainConfig train;
  std::string encoder = "self_attention";
  bool no_shuffle = false;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--lambda", f.train.lambda, "Span loss weight in [0, 1]; 0 trains classification only")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--epochs", f.train.epochs)->check(CLI::PositiveNumber);
  cmd->add_option("--lr", f.train.learning_rate, "SGD learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", f.train.batch_size)->check(CLI::PositiveNumber);
  cmd->add_option("--clip", f.train.grad_clip, "Gradient-norm clip")->check(CLI::PositiveNumber);
  cmd->add_flag("--class-weighting", f.train.class_weighting, "Inverse-frequency weights on the risk loss");
  cmd->add_flag("--no-shuffle", f.no_shuffle);
  cmd->add_option("--min-count", f.train.min_count, "Vocabulary frequency threshold")->check(CLI::PositiveNumber);
  cmd->add_option("--encoder", f.encoder)->check(CLI::IsMember({"self_attention", "window_mean"}));
  cmd->add_option("--embed-dim", f.model.embed_dim)->check(CLI::PositiveNumber);
  cmd->add_option("--attention-dim", f.model.attention_dim)->check(CLI::PositiveNumber);
  cmd->add_option("--max-len", f.model.max_len)->check(CLI::PositiveNumber);
}

void finalize(ModelFlags& f, const Common& c) {
  f.model.encoder_kind = parse_encoder(f.encoder);
  f.model.seed = c.seed;
  f.train.seed = c.seed;
  f.train.shuffle = !f.no_shuffle;
}

struct BaselineFlags {
  TfidfConfig tfidf;
  LogRegConfig logreg;
};

void add_baseline_flags(CLI::App* cmd, BaselineFlags& f) {
  cmd->add_option("--min-df", f.tfidf.min_df, "TF-IDF document-frequency floor")->check(CLI::PositiveNumber);
  cmd->add_option("--l2", f.logreg.l2, "Logistic regression L2 strength")->check(CLI::NonNegativeNumber);
  cmd->add_option("--lr-epochs", f.logreg.epochs, "Logistic regression epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--lr-rate", f.logreg.learning_rate, "Logistic regression step size")->check(CLI::PositiveNumber);
}

void apply_kernels(const Common& c) {
  if (c.kernels == "scalar") kernels::force_isa(kernels::Isa::Scalar);
  else if (c.kernels == "avx2") kernels::force_isa(kernels::Isa::Avx2);
  else kernels::force_isa(kernels::detect_isa());
}

// Expands a --config JSON object into flag tokens placed ahead of the user's
// own flags, so that with TakeLast the command line overrides the file.
std::vector<std::string> config_tokens(const std::string& path, CLI::App* cmd) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path, "config file"));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  std::vector<std::string> tokens;
  for (const auto& [key, value] : j.items()) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    if (name == "config" || cmd->get_option_no_throw("--" + name) == nullptr) {
      throw UsageError("unknown config key '" + key + "' for command " + cmd->get_name());
    }
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      for (const auto& v : value) text += (text.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
    } else {
      text = value.dump();
    }
    tokens.push_back("--" + name + "=" + text);
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// commands

int cmd_gen_data(const Common& c, std::size_t count, const std::string& gen_config, std::ostream& err) {
  GenConfig config = gen_config.empty() ? GenConfig::defaults() : gen_config_from_json(gen_config);
  config.count = count;
  const auto docs = generate_synthetic(config, c.seed);
  std::ostringstream body;
  write_corpus(docs, body);
  write_file(c.out, body.str());

  std::array<std::size_t, kNumRiskLevels> counts{};
  for (const auto& d : docs) ++counts[index_of(d.risk)];
  ojson manifest;
  manifest["generator"] = "riskspan-synthetic-1";
  manifest["seed"] = c.seed;
  manifest["count"] = docs.size();
  ojson cc;
  for (RiskLevel r : kAllRiskLevels) cc[std::string(1, risk_char(r))] = counts[index_of(r)];
  manifest["class_counts"] = std::move(cc);
  manifest["class_weights"] = config.class_weights;
  manifest["lexicon_hash"] = hex64(lexicon_hash(config));
  manifest["corpus_hash"] = hex64(fnv1a64(body.str()));
  write_file(c.out + ".manifest.json", manifest.dump(2) + "\n");
  if (!c.quiet) err << "wrote " << docs.size() << " documents to " << c.out << "\n";
  return kExitOk;
}

int cmd_train(const Common& c, ModelFlags& f, const std::string& corpus_path, const std::string& history_path,
              bool grid_lambda, const std::string& grid_text, double dev_fraction, const std::string& grid_out,
              const std::string& baseline, BaselineFlags& bf, std::ostream& err) {
  finalize(f, c);
  const auto corpus = load_corpus(corpus_path);
  if (baseline == "tfidf-lr") {
    bf.logreg.seed = c.seed;
    save_baseline(fit_tfidf_lr(corpus, bf.tfidf, bf.logreg), c.out);
    if (!c.quiet) err << "wrote tfidf-lr baseline to " << c.out << "\n";
    return kExitOk;
  }
  if (grid_lambda) {
    const auto grid = parse_grid(grid_text);
    if (!c.quiet) err << "grid search over " << grid.size() << " lambda values\n";
    const LambdaSearch search = tune_lambda(corpus, grid, f.model, f.train, dev_fraction);
    ojson table;
    table["best_lambda"] = search.best_lambda;
    table["dev_fraction"] = dev_fraction;
    table["selection"] = "mean(span_f1_exact, risk_macro_f1)";
    ojson rows = ojson::array();
    for (const auto& r : search.table) {
      ojson row;
      row["lambda"] = r.lambda;
      row["span_f1"] = r.span_f1;
      row["risk_macro_f1"] = r.risk_macro_f1;
      row["score"] = r.score;
      rows.push_back(std::move(row));
    }
    table["table"] = std::move(rows);
    write_file(grid_out.empty() ? c.out + ".grid.json" : grid_out, table.dump(2) + "\n");
    f.train.lambda = search.best_lambda;
    if (!c.quiet) err << "best lambda " << search.best_lambda << "; training final model\n";
  }
  const auto result = train(corpus, f.model, f.train, [&](std::size_t epoch, const LossBreakdown& l) {
    if (!c.quiet) {
      err << "epoch " << epoch << "/" << f.train.epochs << " l_span=" << l.l_span << " l_cls=" << l.l_cls
          << " l_total=" << l.l_total << "\n";
    }
  });
  save_model(result.model, c.out);
  std::ostringstream hist;
  write_history(result.history, hist);
  write_file(history_path.empty() ? c.out + ".history.jsonl" : history_path, hist.str());
  return kExitOk;
}

int cmd_extract(const Common& c, const std::string& model_path, const std::string& corpus_path) {
  const std::string model_text = read_file(model_path, "model file");
  const auto corpus = load_corpus(corpus_path);
  std::vector<Prediction> preds;
  preds.reserve(corpus.size());
  if (is_baseline_file(model_text)) {
    const auto model = load_baseline(model_path);
    for (const auto& doc : corpus) preds.push_back(baseline_prediction(model, doc));
  } else {
    const Model model = model_from_json(model_text);
    for (const auto& doc : corpus) preds.push_back(extract(model, doc));
  }
  std::ostringstream body;
  write_predictions(preds, body);
  write_file(c.out, body.str());
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& pred_path, const std::string& gold_path,
             const std::string& model_path, const std::string& mode, std::size_t bench_reps, std::ostream& out) {
  const auto gold = load_corpus(gold_path);
  const auto preds = align_predictions(load_predictions(pred_path), gold);
  const auto pred_spans = pred_char_spans(preds);
  const auto gold_spans = gold_char_spans(gold);

  ojson report;
  report["format_version"] = "1";
  ojson config;
  config["pred"] = fs::path(pred_path).filename().string();
  config["gold"] = fs::path(gold_path).filename().string();
  config["model"] = model_path.empty() ? ojson(nullptr) : ojson(fs::path(model_path).filename().string());
  config["mode"] = mode;
  config["bench_reps"] = bench_reps;
  report["config"] = std::move(config);
  report["corpus_fingerprint"] = hex64(fnv1a64(read_file(gold_path, "gold corpus")));
  report["n_docs"] = gold.size();
  ojson spans;
  spans["primary_mode"] = mode;
  spans["exact"] = span_json(span_prf(pred_spans, gold_spans, SpanMatchMode::Exact));
  spans["overlap"] = span_json(span_prf(pred_spans, gold_spans, SpanMatchMode::Overlap));
  report["spans"] = std::move(spans);
  report["cls"] = cls_json(cls_scores(preds, gold));

  report["embedding_match_recall"] = nullptr;
  report["bench"] = nullptr;
  if (!model_path.empty()) {
    const std::string model_text = read_file(model_path, "model file");
    if (!is_baseline_file(model_text)) {
      const Model model = model_from_json(model_text);
      report["embedding_match_recall"] = corpus_match_recall(model, gold, preds);
      if (bench_reps > 0) report["bench"] = bench_json(bench_inference(model, gold, bench_reps));
    }
  }
  emit(c.out, report.dump(2) + "\n", out);
  return kExitOk;
}

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

int cmd_crossval(const Common& c, ModelFlags& f, BaselineFlags& bf, const std::string& corpus_path, std::size_t k,
                 const std::string& baseline, std::ostream& out, std::ostream& err) {
  finalize(f, c);
  bf.logreg.seed = c.seed;
  const auto corpus = load_corpus(corpus_path);
  const FoldAssignment folds = kfold_split(corpus, k, c.seed);
  const bool neural = baseline == "none";

  ojson report;
  report["format_version"] = "1";
  report["method"] = neural ? "neural" : baseline;
  report["k"] = k;
  report["seed"] = c.seed;
  report["corpus_fingerprint"] = hex64(fnv1a64(read_file(corpus_path, "corpus")));
  report["n_docs"] = corpus.size();
  if (neural) {
    ojson tc;
    tc["lambda"] = f.train.lambda;
    tc["epochs"] = f.train.epochs;
    tc["learning_rate"] = f.train.learning_rate;
    tc["batch_size"] = f.train.batch_size;
    tc["encoder"] = std::string(encoder_name(f.model.encoder_kind));
    report["train_config"] = std::move(tc);
  }

  std::map<std::string, std::vector<double>> series;
  ojson fold_reports = ojson::array();
  for (std::size_t fold = 0; fold < k; ++fold) {
    std::vector<AnnotatedDocument> train_docs, test_docs;
    for (std::size_t i : folds.complement(fold)) train_docs.push_back(corpus[i]);
    for (std::size_t i : folds.members(fold)) test_docs.push_back(corpus[i]);
    if (!c.quiet) err << "fold " << fold + 1 << "/" << k << ": " << train_docs.size() << " train, " << test_docs.size() << " test\n";

    std::vector<Prediction> preds;
    ojson fr;
    fr["fold"] = fold;
    fr["n_train"] = train_docs.size();
    fr["n_test"] = test_docs.size();
    std::array<std::size_t, kNumRiskLevels> class_counts{};
    for (const auto& d : test_docs) ++class_counts[index_of(d.risk)];
    fr["class_counts"] = class_counts;
    if (neural) {
      const Model model = train(train_docs, f.model, f.train).model;
      for (const auto& d : test_docs) preds.push_back(extract(model, d));
      const auto ps = pred_char_spans(preds);
      const auto gs = gold_char_spans(test_docs);
      const SpanScore exact = span_prf(ps, gs, SpanMatchMode::Exact);
      const SpanScore overlap = span_prf(ps, gs, SpanMatchMode::Overlap);
      ojson spans;
      spans["exact"] = span_json(exact);
      spans["overlap"] = span_json(overlap);
      fr["spans"] = std::move(spans);
      const double emr = corpus_match_recall(model, test_docs, preds);
      fr["embedding_match_recall"] = emr;
      series["span_exact_precision"].push_back(exact.precision);
      series["span_exact_recall"].push_back(exact.recall);
      series["span_exact_f1"].push_back(exact.f1);
      series["span_overlap_f1"].push_back(overlap.f1);
      series["embedding_match_recall"].push_back(emr);
    } else {
      const TfidfLrModel model = fit_tfidf_lr(train_docs, bf.tfidf, bf.logreg);
      for (const auto& d : test_docs) preds.push_back(baseline_prediction(model, d));
      fr["spans"] = nullptr;
      fr["embedding_match_recall"] = nullptr;
    }
    const ClsScore cls = cls_scores(preds, test_docs);
    fr["cls"] = cls_json(cls);
    series["accuracy"].push_back(cls.accuracy);
    series["macro_precision"].push_back(cls.macro_precision);
    series["macro_recall"].push_back(cls.macro_recall);
    series["macro_f1"].push_back(cls.macro_f1);
    series["weighted_f1"].push_back(cls.weighted_f1);
    if (cls.macro_auc) series["macro_auc"].push_back(*cls.macro_auc);
    fold_reports.push_back(std::move(fr));
  }
  report["folds"] = std::move(fold_reports);

  ojson agg;
  for (const auto& [name, xs] : series) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    ojson m;
    m["mean"] = mean;
    m["std"] = sample_std(xs, mean);
    m["n"] = xs.size();
    agg[name] = std::move(m);
  }
  report["aggregate"] = std::move(agg);
  emit(c.out, report.dump(2) + "\n", out);
  return kExitOk;
}

int cmd_bench(const Common& c, const std::string& model_path, const std::string& corpus_path, std::size_t reps,
              std::ostream& out) {
  const Model model = load_model(model_path);
  const auto corpus = load_corpus(corpus_path);
  ojson j = bench_json(bench_inference(model, corpus, reps));
  j["kernels"] = std::string(kernels::isa_name(kernels::active_isa()));
  emit(c.out, j.dump(2) + "\n", out);
  return kExitOk;
}

int cmd_grad_check(const Common& c, double threshold, double eps, std::ostream& out) {
  ojson report;
  report["threshold"] = threshold;
  report["eps"] = eps;
  report["seed"] = c.seed;
  ojson checks = ojson::array();
  double worst = 0.0;
  for (EncoderKind kind : {EncoderKind::WindowMean, EncoderKind::SelfAttention}) {
    const GradCheckFixture fixture = make_grad_check_fixture(kind, c.seed);
    for (double lambda : {0.0, 0.5, 1.0}) {
      const GradCheckReport r = grad_check(fixture.model, fixture.batch, lambda, eps);
      ojson row;
      row["encoder"] = std::string(encoder_name(kind));
      row["lambda"] = lambda;
      row["max_rel_err"] = r.max_rel_err;
      row["worst_param"] = r.worst_param;
      row["checked"] = r.checked;
      checks.push_back(std::move(row));
      worst = std::max(worst, r.max_rel_err);
    }
  }
  const bool pass = worst < threshold;
  report["checks"] = std::move(checks);
  report["max_rel_err"] = worst;
  report["pass"] = pass;
  emit(c.out, report.dump(2) + "\n", out);
  return pass ? kExitOk : kExitRuntime;
}

std::string fmt(const nlohmann::json& v) {
  if (v.is_null()) return "n/a";
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(4);
  s << v.get<double>();
  return s.str();
}

int cmd_report(const Common& c, const std::string& input, std::ostream& out) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(input, "report"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedJson, "report " + input + ": " + e.what());
  }
  std::ostringstream md;
  try {
    if (j.contains("folds")) {
      md << "# Cross-validation (" << j.at("method").get<std::string>() << ", k=" << j.at("k").get<std::size_t>()
         << ")\n\n| metric | mean | std |\n|---|---|---|\n";
      for (const auto& [name, m] : j.at("aggregate").items()) {
        md << "| " << name << " | " << fmt(m.at("mean")) << " | " << fmt(m.at("std")) << " |\n";
      }
    } else {
      const auto& cls = j.at("cls");
      md << "# Evaluation (" << j.at("n_docs").get<std::size_t>() << " documents)\n\n";
      md << "## Marker spans\n\n| mode | precision | recall | F1 |\n|---|---|---|---|\n";
      for (const char* mode : {"exact", "overlap"}) {
        const auto& s = j.at("spans").at(mode);
        md << "| " << mode << " | " << fmt(s.at("precision")) << " | " << fmt(s.at("recall")) << " | "
           << fmt(s.at("f1")) << " |\n";
      }
      md << "\nEmbedding-match recall: " << fmt(j.at("embedding_match_recall")) << "\n\n";
      md << "## Risk level\n\nAccuracy " << fmt(cls.at("accuracy")) << ", macro F1 " << fmt(cls.at("macro_f1"))
         << ", weighted F1 " << fmt(cls.at("weighted_f1")) << ", macro AUC " << fmt(cls.at("macro_auc")) << "\n\n";
      md << "| class | precision | recall | F1 | AUC | support |\n|---|---|---|---|---|---|\n";
      for (const auto& [name, pc] : cls.at("per_class").items()) {
        md << "| " << name << " | " << fmt(pc.at("precision")) << " | " << fmt(pc.at("recall")) << " | "
           << fmt(pc.at("f1")) << " | " << fmt(pc.at("auc")) << " | " << pc.at("support").get<std::size_t>() << " |\n";
      }
      if (!j.at("bench").is_null()) {
        const auto& b = j.at("bench");
        md << "\n## Inference latency\n\nmean " << fmt(b.at("mean_latency_s")) << " s, p50 " << fmt(b.at("p50"))
           << " s, p95 " << fmt(b.at("p95")) << " s\n";
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedJson, "report " + input + " is neither an eval nor a crossval report: " + e.what());
  }
  emit(c.out, md.str(), out);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evidence-driven risk classification with marker span extraction"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // gen-data
  Common gen_common;
  std::size_t gen_count = 2000;
  std::string gen_config;
  auto* gen = app.add_subcommand("gen-data", "Write a deterministic synthetic corpus");
  add_common(gen, gen_common, true);
  gen->add_option("--count", gen_count, "Number of documents");
  gen->add_option("--gen-config", gen_config, "JSON lexicon and class-weight overrides");

  // train
  Common train_common;
  ModelFlags train_flags;
  BaselineFlags train_baseline;
  std::string train_corpus, history, grid_text = "0,0.25,0.5,0.75,1", grid_out, train_kind = "none";
  bool grid_lambda = false;
  double dev_fraction = 0.2;
  auto* tr = app.add_subcommand("train", "Train the multi-task model (or the tfidf-lr baseline)");
  add_common(tr, train_common, true);
  add_model_flags(tr, train_flags);
  add_baseline_flags(tr, train_baseline);
  tr->add_option("--corpus", train_corpus)->required();
  tr->add_option("--history", history, "Per-epoch loss JSONL (default <out>.history.jsonl)");
  tr->add_flag("--grid-lambda", grid_lambda, "Pick lambda on a held-out dev split first");
  tr->add_option("--grid", grid_text, "Comma-separated lambda grid");
  tr->add_option("--dev-fraction", dev_fraction)->check(CLI::Range(0.01, 0.99));
  tr->add_option("--grid-out", grid_out, "Dev-score table (default <out>.grid.json)");
  tr->add_option("--baseline", train_kind)->check(CLI::IsMember({"none", "tfidf-lr"}));

  // extract
  Common ex_common;
  std::string ex_model, ex_corpus;
  auto* ex = app.add_subcommand("extract", "Predict risk levels and marker spans");
  add_common(ex, ex_common, true);
  ex->add_option("--model", ex_model)->required();
  ex->add_option("--corpus", ex_corpus)->required();

  // eval
  Common ev_common;
  std::string ev_pred, ev_gold, ev_model, ev_mode = "exact";
  std::size_t ev_bench = 0;
  auto* ev = app.add_subcommand("eval", "Score predictions against gold annotations");
  add_common(ev, ev_common, false);
  ev->add_option("--pred", ev_pred)->required();
  ev->add_option("--gold", ev_gold)->required();
  ev->add_option("--model", ev_model, "Model for embedding-match recall");
  ev->add_option("--mode", ev_mode, "Primary span matching mode")->check(CLI::IsMember({"exact", "overlap"}));
  ev->add_option("--bench-reps", ev_bench, "Also time inference (0 = skip; otherwise >= 3)");

  // crossval
  Common cv_common;
  ModelFlags cv_flags;
  BaselineFlags cv_baseline;
  std::string cv_corpus, cv_kind = "none";
  std::size_t cv_k = 5;
  auto* cv = app.add_subcommand("crossval", "Stratified k-fold cross-validation");
  add_common(cv, cv_common, false);
  add_model_flags(cv, cv_flags);
  add_baseline_flags(cv, cv_baseline);
  cv->add_option("--corpus", cv_corpus)->required();
  cv->add_option("--k", cv_k)->check(CLI::Range(2, 1000));
  cv->add_option("--baseline", cv_kind)->check(CLI::IsMember({"none", "tfidf-lr"}));

  // bench
  Common bench_common;
  std::string bench_model, bench_corpus;
  std::size_t bench_reps = 5;
  auto* bench = app.add_subcommand("bench", "Per-document inference latency");
  add_common(bench, bench_common, false);
  bench->add_option("--model", bench_model)->required();
  bench->add_option("--corpus", bench_corpus)->required();
  bench->add_option("--reps", bench_reps)->check(CLI::Range(std::size_t{3}, std::size_t{1000000}));

  // grad-check
  Common gc_common;
  double gc_threshold = 1e-4, gc_eps = 1e-4;
  auto* gc = app.add_subcommand("grad-check", "Compare analytic gradients with central differences");
  add_common(gc, gc_common, false);
  gc->add_option("--threshold", gc_threshold)->check(CLI::PositiveNumber);
  gc->add_option("--eps", gc_eps)->check(CLI::Range(1e-12, 1e-2));

  // report
  Common rp_common;
  std::string rp_input;
  auto* rp = app.add_subcommand("report", "Render an eval or crossval report as Markdown");
  add_common(rp, rp_common, false);
  rp->add_option("--input", rp_input)->required();

  const std::map<CLI::App*, Common*> commons = {{gen, &gen_common}, {tr, &train_common}, {ex, &ex_common},
                                                {ev, &ev_common},   {cv, &cv_common},    {bench, &bench_common},
                                                {gc, &gc_common},   {rp, &rp_common}};

  try {
    // Config files expand into ordinary flags ahead of the user's.
    std::vector<std::string> argv = args;
    const auto sub_it = std::find_if(argv.begin(), argv.end(), [](const std::string& a) { return !a.starts_with("-"); });
    if (sub_it != argv.end()) {
      CLI::App* sub = app.get_subcommand_no_throw(*sub_it);
      std::string config_path;
      for (std::size_t i = 0; i < argv.size(); ++i) {
        if (argv[i] == "--config" && i + 1 < argv.size()) config_path = argv[i + 1];
        else if (argv[i].starts_with("--config=")) config_path = argv[i].substr(9);
      }
      if (sub != nullptr && !config_path.empty()) {
        const auto tokens = config_tokens(config_path, sub);
        argv.insert(sub_it + 1, tokens.begin(), tokens.end());
      }
    }
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const Common& common = *commons.at(sub);
    apply_kernels(common);
    if (sub == gen) return cmd_gen_data(gen_common, gen_count, gen_config, err);
    if (sub == tr) {
      return cmd_train(train_common, train_flags, train_corpus, history, grid_lambda, grid_text, dev_fraction, grid_out,
                       train_kind, train_baseline, err);
    }
    if (sub == ex) return cmd_extract(ex_common, ex_model, ex_corpus);
    if (sub == ev) {
      if (ev_bench > 0 && ev_bench < 3) throw UsageError("--bench-reps must be 0 or at least 3");
      return cmd_eval(ev_common, ev_pred, ev_gold, ev_model, ev_mode, ev_bench, out);
    }
    if (sub == cv) return cmd_crossval(cv_common, cv_flags, cv_baseline, cv_corpus, cv_k, cv_kind, out, err);
    if (sub == bench) return cmd_bench(bench_common, bench_model, bench_corpus, bench_reps, out);
    if (sub == gc) return cmd_grad_check(gc_common, gc_threshold, gc_eps, out);
    if (sub == rp) return cmd_report(rp_common, rp_input, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace riskspan::cli
