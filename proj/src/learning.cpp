#include "riskspan/learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "riskspan/corpus.hpp"
#include "riskspan/decode.hpp"
#include "riskspan/error.hpp"
#include "riskspan/kernels.hpp"
#include "riskspan/metrics.hpp"
#include "riskspan/rng.hpp"

namespace riskspan {

namespace {

double clamped_nll(double p) { return -std::log(std::max(p, kLogClamp)); }

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    std::ostringstream msg;
    msg << "lambda " << lambda << " outside [0, 1]";
    throw Error(ErrorCode::LambdaOutOfRange, msg.str());
  }
}

}  // namespace

double span_loss(std::span<const TagDistribution> p_span, std::span<const BioTag> tags) {
  if (p_span.size() != tags.size() || tags.empty()) {
    throw Error(ErrorCode::LengthMismatch, "span loss needs equal, nonzero lengths (got " +
                                               std::to_string(p_span.size()) + " rows, " +
                                               std::to_string(tags.size()) + " tags)");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < tags.size(); ++i) sum += clamped_nll(p_span[i][static_cast<std::size_t>(tags[i])]);
  return sum / static_cast<double>(tags.size());
}

double cls_loss(const RiskDistribution& p_cls, RiskLevel y) { return clamped_nll(p_cls[index_of(y)]); }

LossBreakdown combined_loss(double l_span, double l_cls, double lambda) {
  check_lambda(lambda);
  return LossBreakdown{lambda, l_span, l_cls, lambda * l_span + (1.0 - lambda) * l_cls};
}

Example make_example(const Model& model, const AnnotatedDocument& doc) {
  const auto tokens = tokenize(doc.text);
  Example ex;
  ex.ids = model.vocab.encode(tokens);
  ex.tags = project_spans_to_bio(doc, tokens);
  const std::size_t n = std::min(ex.ids.size(), model.config.max_len);
  ex.ids.resize(n);
  ex.tags.resize(n);
  ex.risk = doc.risk;
  return ex;
}

namespace {

struct DocLoss {
  double span = 0.0;
  double cls = 0.0;
};

DocLoss doc_loss(const ForwardTrace& t, const Example& ex) {
  double span = 0.0;
  for (std::size_t i = 0; i < ex.tags.size(); ++i) {
    span += clamped_nll(t.span_probs.at(i, static_cast<std::size_t>(ex.tags[i])));
  }
  span /= static_cast<double>(ex.tags.size());
  return {span, ex.cls_weight * clamped_nll(t.cls_probs[index_of(ex.risk)])};
}

void check_batch(std::span<const Example> batch) {
  if (batch.empty()) throw Error(ErrorCode::EmptyInput, "empty batch");
  for (const auto& ex : batch) {
    if (ex.ids.size() != ex.tags.size()) throw Error(ErrorCode::LengthMismatch, "ids and tags differ in length");
  }
}

// Accumulates d(scale * loss_doc) into `g` by reverse-mode over one trace.
void backprop_doc(const Model& model, const ForwardTrace& t, const Example& ex, double span_scale,
                  double cls_scale, Gradients& g) {
  const auto& k = kernels::active();
  const Parameters& p = model.params;
  const std::size_t n = t.ids.size();
  const std::size_t d = model.config.embed_dim;
  const std::size_t da = model.config.attention_dim;
  const std::size_t hidden = 2 * d;
  const bool attention = model.config.encoder_kind == EncoderKind::SelfAttention;

  Tensor d_states(n, d);

  // Span head: softmax + NLL gives (p - onehot) at the logits.
  if (span_scale != 0.0) {
    const double row_scale = span_scale / static_cast<double>(n);
    std::array<double, kNumTags> gl{};
    for (std::size_t i = 0; i < n; ++i) {
      const auto tag = static_cast<std::size_t>(ex.tags[i]);
      if (t.span_probs.at(i, tag) < kLogClamp) continue;
      for (std::size_t j = 0; j < kNumTags; ++j) gl[j] = row_scale * (t.span_probs.at(i, j) - (j == tag ? 1.0 : 0.0));
      k.ger(t.states.row(i).data(), gl.data(), g.span_w.data.data(), d, kNumTags);
      for (std::size_t j = 0; j < kNumTags; ++j) g.span_b.data[j] += gl[j];
      k.gemv(p.span_w.data.data(), gl.data(), d_states.row(i).data(), d, kNumTags);
    }
  }

  // Classification head on the mean-pooled state.
  if (cls_scale != 0.0) {
    const auto y = index_of(ex.risk);
    if (t.cls_probs[y] >= kLogClamp) {
      std::array<double, kNumRiskLevels> gl{};
      for (std::size_t j = 0; j < kNumRiskLevels; ++j) gl[j] = cls_scale * (t.cls_probs[j] - (j == y ? 1.0 : 0.0));
      k.ger(t.pooled.data(), gl.data(), g.cls_w.data.data(), d, kNumRiskLevels);
      for (std::size_t j = 0; j < kNumRiskLevels; ++j) g.cls_b.data[j] += gl[j];
      std::vector<double> d_pooled(d);
      k.gemv(p.cls_w.data.data(), gl.data(), d_pooled.data(), d, kNumRiskLevels);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) k.axpy(inv_n, d_pooled.data(), d_states.row(i).data(), d);
    }
  }

  // Position-wise feed-forward (plus residual for the attention encoder).
  Tensor d_mixed(n, d);
  std::vector<double> d_hidden(hidden);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ds = d_states.row(i);
    k.axpy(1.0, ds.data(), g.ff_out_bias.data.data(), d);
    k.ger(t.hidden.row(i).data(), ds.data(), g.ff_out.data.data(), hidden, d);
    k.gemv(p.ff_out.data.data(), ds.data(), d_hidden.data(), hidden, d);
    const auto h = t.hidden.row(i);
    for (std::size_t c = 0; c < hidden; ++c) d_hidden[c] *= 1.0 - h[c] * h[c];
    k.axpy(1.0, d_hidden.data(), g.ff_in_bias.data.data(), hidden);
    k.ger(t.mixed.row(i).data(), d_hidden.data(), g.ff_in.data.data(), d, hidden);
    auto dm = d_mixed.row(i);
    k.gemv(p.ff_in.data.data(), d_hidden.data(), dm.data(), d, hidden);
    if (attention) k.axpy(1.0, ds.data(), dm.data(), d);
  }

  Tensor d_inputs(n, d);
  if (attention) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(da));
    Tensor d_q(n, da), d_k(n, da), d_v(n, da);
    std::vector<double> d_ctx(da), d_att(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto dz = d_mixed.row(i);
      // z = x + Wo^T c
      k.axpy(1.0, dz.data(), d_inputs.row(i).data(), d);
      k.ger(t.context.row(i).data(), dz.data(), g.output.data.data(), da, d);
      k.gemv(p.output.data.data(), dz.data(), d_ctx.data(), da, d);
      // c = sum_j A_ij v_j
      const auto a = t.attention.row(i);
      double weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        d_att[j] = k.dot(d_ctx.data(), t.values.row(j).data(), da);
        k.axpy(a[j], d_ctx.data(), d_v.row(j).data(), da);
        weighted += a[j] * d_att[j];
      }
      // row softmax, then scaled dot-product scores
      for (std::size_t j = 0; j < n; ++j) {
        const double ds = a[j] * (d_att[j] - weighted) * scale;
        if (ds == 0.0) continue;
        k.axpy(ds, t.keys.row(j).data(), d_q.row(i).data(), da);
        k.axpy(ds, t.queries.row(i).data(), d_k.row(j).data(), da);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = t.inputs.row(i).data();
      double* dx = d_inputs.row(i).data();
      std::vector<double> tmp(d);
      k.ger(x, d_q.row(i).data(), g.query.data.data(), d, da);
      k.ger(x, d_k.row(i).data(), g.key.data.data(), d, da);
      k.ger(x, d_v.row(i).data(), g.value.data.data(), d, da);
      k.gemv(p.query.data.data(), d_q.row(i).data(), tmp.data(), d, da);
      k.axpy(1.0, tmp.data(), dx, d);
      k.gemv(p.key.data.data(), d_k.row(i).data(), tmp.data(), d, da);
      k.axpy(1.0, tmp.data(), dx, d);
      k.gemv(p.value.data.data(), d_v.row(i).data(), tmp.data(), d, da);
      k.axpy(1.0, tmp.data(), dx, d);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i >= 2 ? i - 2 : 0;
      const std::size_t hi = std::min(n - 1, i + 2);
      const double inv = 1.0 / static_cast<double>(hi - lo + 1);
      for (std::size_t j = lo; j <= hi; ++j) k.axpy(inv, d_mixed.row(i).data(), d_inputs.row(j).data(), d);
    }
  }

  // x = E[id] + P[pos]
  for (std::size_t i = 0; i < n; ++i) {
    const auto dx = d_inputs.row(i);
    k.axpy(1.0, dx.data(), g.embedding.row(static_cast<std::size_t>(t.ids[i])).data(), d);
    k.axpy(1.0, dx.data(), g.position.row(i).data(), d);
  }
}

}  // namespace

LossBreakdown batch_loss(const Model& model, std::span<const Example> batch, double lambda) {
  check_lambda(lambda);
  check_batch(batch);
  double span = 0.0, cls = 0.0;
  for (const auto& ex : batch) {
    const DocLoss l = doc_loss(forward_traced(model, ex.ids), ex);
    span += l.span;
    cls += l.cls;
  }
  const auto b = static_cast<double>(batch.size());
  return combined_loss(span / b, cls / b, lambda);
}

BackwardResult backward(const Model& model, std::span<const Example> batch, double lambda) {
  check_lambda(lambda);
  check_batch(batch);
  BackwardResult r{{}, model.params.zeros_like()};
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double span = 0.0, cls = 0.0;
  for (const auto& ex : batch) {
    const ForwardTrace t = forward_traced(model, ex.ids);
    const DocLoss l = doc_loss(t, ex);
    span += l.span;
    cls += l.cls;
    backprop_doc(model, t, ex, lambda * inv_b, (1.0 - lambda) * ex.cls_weight * inv_b, r.grads);
  }
  r.loss = combined_loss(span * inv_b, cls * inv_b, lambda);
  return r;
}

GradCheckReport grad_check(const Model& model, std::span<const Example> batch, double lambda, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw Error(ErrorCode::InvalidArgument, "eps must lie in (0, 1e-2]");
  const Gradients analytic = backward(model, batch, lambda).grads;
  std::vector<const Tensor*> analytic_tensors;
  analytic.for_each([&](std::string_view, const Tensor& t) { analytic_tensors.push_back(&t); });

  Model probe = model;
  GradCheckReport report;
  report.worst_param = "none";
  std::size_t tensor_index = 0;
  probe.params.for_each([&](std::string_view name, Tensor& t) {
    const Tensor& a = *analytic_tensors[tensor_index++];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.data[i];
      t.data[i] = saved + eps;
      const double up = batch_loss(probe, batch, lambda).l_total;
      t.data[i] = saved - eps;
      const double down = batch_loss(probe, batch, lambda).l_total;
      t.data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(a.data[i]), std::abs(numeric), 1e-8});
      const double rel = std::abs(a.data[i] - numeric) / denom;
      ++report.checked;
      if (!(rel <= report.max_rel_err)) {
        report.max_rel_err = std::isnan(rel) ? std::numeric_limits<double>::infinity() : rel;
        report.worst_param = std::string(name) + "[" + std::to_string(i) + "]";
      }
    }
  });
  return report;
}

GradCheckFixture make_grad_check_fixture(EncoderKind kind, std::uint64_t seed) {
  std::vector<std::string> terms{std::string(Vocab::kUnkTerm)};
  for (int i = 1; i < 20; ++i) terms.push_back("w" + std::to_string(i));
  ModelConfig config;
  config.embed_dim = 8;
  config.attention_dim = 8;
  config.max_len = 8;
  config.encoder_kind = kind;
  config.seed = seed;
  GradCheckFixture f{init_model(config, Vocab(terms)), {}};

  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const std::array<std::size_t, 3> lengths = {6, 4, 5};
  for (std::size_t len : lengths) {
    Example ex;
    for (std::size_t i = 0; i < len; ++i) {
      ex.ids.push_back(static_cast<std::int32_t>(rng.below(terms.size())));
      ex.tags.push_back(static_cast<BioTag>(rng.below(kNumTags)));
    }
    ex.risk = static_cast<RiskLevel>(rng.below(kNumRiskLevels));
    f.batch.push_back(std::move(ex));
  }
  return f;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  check_lambda(lambda);
  if (!(learning_rate > 0.0) || epochs == 0 || batch_size == 0) {
    throw Error(ErrorCode::InvalidArgument, "learning_rate, epochs and batch_size must be positive");
  }
  if (!(grad_clip > 0.0)) throw Error(ErrorCode::InvalidArgument, "grad_clip must be positive");
  if (min_count == 0) throw Error(ErrorCode::InvalidArgument, "min_count must be >= 1");
}

std::array<double, kNumRiskLevels> inverse_frequency_weights(std::span<const RiskLevel> labels) {
  std::array<std::size_t, kNumRiskLevels> counts{};
  for (RiskLevel r : labels) ++counts[index_of(r)];
  const auto present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
  std::array<double, kNumRiskLevels> w{};
  for (std::size_t k = 0; k < kNumRiskLevels; ++k) {
    if (counts[k] > 0) w[k] = static_cast<double>(labels.size()) / (present * static_cast<double>(counts[k]));
  }
  return w;
}

TrainResult train(std::span<const AnnotatedDocument> corpus, const ModelConfig& model_config,
                  const TrainConfig& tc, const EpochCallback& on_epoch) {
  tc.validate();
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot train on an empty corpus");

  TrainResult result{init_model(model_config, build_vocab(corpus, tc.min_count)), {}};
  Model& model = result.model;

  std::vector<Example> examples;
  examples.reserve(corpus.size());
  for (const auto& doc : corpus) {
    Example ex = make_example(model, doc);
    if (!ex.ids.empty()) examples.push_back(std::move(ex));  // whitespace-only texts carry no tokens
  }
  if (examples.empty()) throw Error(ErrorCode::EmptyCorpus, "no document in the corpus has any tokens");
  if (tc.class_weighting) {
    std::vector<RiskLevel> labels;
    for (const auto& ex : examples) labels.push_back(ex.risk);
    const auto w = inverse_frequency_weights(labels);
    for (auto& ex : examples) ex.cls_weight = w[index_of(ex.risk)];
  }

  Rng rng(tc.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Example> batch;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    if (tc.shuffle) rng.shuffle(std::span(order));
    double span_sum = 0.0, cls_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tc.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(examples[order[i]]);
      BackwardResult r = backward(model, batch, tc.lambda);
      if (!std::isfinite(r.loss.l_total)) {
        throw Error(ErrorCode::NonFiniteLoss, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                                  std::to_string(batches + 1));
      }
      double norm_sq = 0.0;
      r.grads.for_each([&](std::string_view, const Tensor& g) { norm_sq += kernels::sum_squares(g.data); });
      const double norm = std::sqrt(norm_sq);
      const double clip = norm > tc.grad_clip ? tc.grad_clip / norm : 1.0;
      const double step = -tc.learning_rate * clip;
      std::vector<Tensor*> targets;
      model.params.for_each([&](std::string_view, Tensor& t) { targets.push_back(&t); });
      std::size_t ti = 0;
      r.grads.for_each([&](std::string_view, const Tensor& g) { kernels::axpy(step, g.data, targets[ti++]->data); });
      span_sum += r.loss.l_span;
      cls_sum += r.loss.l_cls;
      ++batches;
    }
    const auto nb = static_cast<double>(batches);
    result.history.push_back(combined_loss(span_sum / nb, cls_sum / nb, tc.lambda));
    if (on_epoch) on_epoch(epoch, result.history.back());
  }
  return result;
}

void write_history(std::span<const LossBreakdown> history, std::ostream& out) {
  for (std::size_t i = 0; i < history.size(); ++i) {
    nlohmann::ordered_json j;
    j["epoch"] = i + 1;
    j["lambda"] = history[i].lambda;
    j["l_span"] = history[i].l_span;
    j["l_cls"] = history[i].l_cls;
    j["l_total"] = history[i].l_total;
    out << j.dump() << '\n';
  }
}

LambdaSearch tune_lambda(std::span<const AnnotatedDocument> corpus, std::span<const double> grid,
                         const ModelConfig& model_config, const TrainConfig& train_config, double dev_fraction) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "lambda grid is empty");
  for (double l : grid) check_lambda(l);
  const auto [train_idx, dev_idx] = stratified_holdout(corpus, dev_fraction, train_config.seed);
  if (dev_idx.empty()) throw Error(ErrorCode::CorpusTooSmall, "development split is empty");
  if (train_idx.empty()) throw Error(ErrorCode::CorpusTooSmall, "training split is empty");

  std::vector<AnnotatedDocument> train_docs, dev_docs;
  for (std::size_t i : train_idx) train_docs.push_back(corpus[i]);
  for (std::size_t i : dev_idx) dev_docs.push_back(corpus[i]);

  LambdaSearch search;
  for (double lambda : grid) {
    TrainConfig tc = train_config;
    tc.lambda = lambda;
    const Model model = train(train_docs, model_config, tc).model;
    std::vector<Prediction> preds;
    std::vector<std::vector<CharSpan>> pred_spans, gold_spans;
    for (const auto& doc : dev_docs) {
      preds.push_back(extract(model, doc));
      auto& ps = pred_spans.emplace_back();
      for (const auto& s : preds.back().spans) ps.push_back(s.span);
      gold_spans.push_back(merge_overlapping(doc.gold_spans));
    }
    LambdaScore row;
    row.lambda = lambda;
    row.span_f1 = span_prf(pred_spans, gold_spans, SpanMatchMode::Exact).f1;
    row.risk_macro_f1 = cls_scores(preds, dev_docs).macro_f1;
    row.score = 0.5 * (row.span_f1 + row.risk_macro_f1);
    search.table.push_back(row);
  }
  const auto better = [](const LambdaScore& a, const LambdaScore& b) {
    if (a.score != b.score) return a.score > b.score;
    const double da = std::abs(a.lambda - 0.5), db = std::abs(b.lambda - 0.5);
    if (da != db) return da < db;
    return a.lambda < b.lambda;
  };
  search.best_lambda = std::min_element(search.table.begin(), search.table.end(), better)->lambda;
  return search;
}

}  // namespace riskspan
