#include "riskspan/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "riskspan/error.hpp"
#include "riskspan/kernels.hpp"
#include "riskspan/rng.hpp"

namespace riskspan {

using ojson = nlohmann::ordered_json;

std::string_view encoder_name(EncoderKind kind) {
  return kind == EncoderKind::WindowMean ? "window_mean" : "self_attention";
}

EncoderKind parse_encoder(std::string_view name) {
  if (name == "window_mean") return EncoderKind::WindowMean;
  if (name == "self_attention") return EncoderKind::SelfAttention;
  throw Error(ErrorCode::InvalidArgument, "unknown encoder kind '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (embed_dim == 0 || attention_dim == 0 || max_len == 0) {
    throw Error(ErrorCode::InvalidArgument, "model dimensions and max_len must be positive");
  }
}

Parameters Parameters::zeros_like() const {
  Parameters z;
  z.embedding = embedding.zeros_like();
  z.position = position.zeros_like();
  z.query = query.zeros_like();
  z.key = key.zeros_like();
  z.value = value.zeros_like();
  z.output = output.zeros_like();
  z.ff_in = ff_in.zeros_like();
  z.ff_in_bias = ff_in_bias.zeros_like();
  z.ff_out = ff_out.zeros_like();
  z.ff_out_bias = ff_out_bias.zeros_like();
  z.span_w = span_w.zeros_like();
  z.span_b = span_b.zeros_like();
  z.cls_w = cls_w.zeros_like();
  z.cls_b = cls_b.zeros_like();
  return z;
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, const Tensor& t) { n += t.size(); });
  return n;
}

namespace {

bool is_bias(std::string_view name) { return name.ends_with("_bias") || name.ends_with("_b"); }

Parameters shaped_parameters(const ModelConfig& c, std::size_t vocab_size) {
  const std::size_t d = c.embed_dim;
  const std::size_t da = c.attention_dim;
  Parameters p;
  p.embedding = Tensor(vocab_size, d);
  p.position = Tensor(c.max_len, d);
  if (c.encoder_kind == EncoderKind::SelfAttention) {
    p.query = Tensor(d, da);
    p.key = Tensor(d, da);
    p.value = Tensor(d, da);
    p.output = Tensor(da, d);
  }
  p.ff_in = Tensor(d, 2 * d);
  p.ff_in_bias = Tensor(2 * d);
  p.ff_out = Tensor(2 * d, d);
  p.ff_out_bias = Tensor(d);
  p.span_w = Tensor(d, kNumTags);
  p.span_b = Tensor(kNumTags);
  p.cls_w = Tensor(d, kNumRiskLevels);
  p.cls_b = Tensor(kNumRiskLevels);
  return p;
}

void check_ids(const Model& model, std::span<const std::int32_t> ids) {
  if (ids.empty()) throw Error(ErrorCode::EmptyInput, "cannot encode an empty token sequence");
  if (ids.size() > model.config.max_len) {
    throw Error(ErrorCode::InvalidArgument, "sequence longer than max_len; truncate first");
  }
  const auto vocab = static_cast<std::int32_t>(model.params.embedding.rows());
  for (std::int32_t id : ids) {
    if (id < 0 || id >= vocab) {
      throw Error(ErrorCode::IdOutOfVocab, "token id " + std::to_string(id) + " outside vocabulary of " +
                                               std::to_string(vocab));
    }
  }
}

void run_encoder(const Model& model, std::span<const std::int32_t> ids, ForwardTrace& t) {
  check_ids(model, ids);
  const auto& k = kernels::active();
  const Parameters& p = model.params;
  const std::size_t n = ids.size();
  const std::size_t d = model.config.embed_dim;
  const std::size_t da = model.config.attention_dim;
  const std::size_t hidden = 2 * d;

  t.ids.assign(ids.begin(), ids.end());
  t.inputs = Tensor(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = t.inputs.row(i);
    const auto e = p.embedding.row(static_cast<std::size_t>(ids[i]));
    const auto pos = p.position.row(i);
    for (std::size_t c = 0; c < d; ++c) x[c] = e[c] + pos[c];
  }

  t.mixed = Tensor(n, d);
  if (model.config.encoder_kind == EncoderKind::SelfAttention) {
    t.queries = Tensor(n, da);
    t.keys = Tensor(n, da);
    t.values = Tensor(n, da);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = t.inputs.row(i).data();
      k.gemv_t(p.query.data.data(), x, t.queries.row(i).data(), d, da);
      k.gemv_t(p.key.data.data(), x, t.keys.row(i).data(), d, da);
      k.gemv_t(p.value.data.data(), x, t.values.row(i).data(), d, da);
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(da));
    t.attention = Tensor(n, n);
    t.context = Tensor(n, da);
    std::vector<double> projected(d);
    for (std::size_t i = 0; i < n; ++i) {
      auto a = t.attention.row(i);
      for (std::size_t j = 0; j < n; ++j) a[j] = k.dot(t.queries.row(i).data(), t.keys.row(j).data(), da) * scale;
      softmax_inplace(a);
      auto c = t.context.row(i);
      for (std::size_t j = 0; j < n; ++j) k.axpy(a[j], t.values.row(j).data(), c.data(), da);
      k.gemv_t(p.output.data.data(), c.data(), projected.data(), da, d);
      auto z = t.mixed.row(i);
      const auto x = t.inputs.row(i);
      for (std::size_t col = 0; col < d; ++col) z[col] = x[col] + projected[col];
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i >= 2 ? i - 2 : 0;
      const std::size_t hi = std::min(n - 1, i + 2);
      auto m = t.mixed.row(i);
      for (std::size_t j = lo; j <= hi; ++j) k.axpy(1.0, t.inputs.row(j).data(), m.data(), d);
      const double inv = 1.0 / static_cast<double>(hi - lo + 1);
      for (double& v : m) v *= inv;
    }
  }

  t.hidden = Tensor(n, hidden);
  t.states = Tensor(n, d);
  const bool residual = model.config.encoder_kind == EncoderKind::SelfAttention;
  for (std::size_t i = 0; i < n; ++i) {
    auto hrow = t.hidden.row(i);
    k.gemv_t(p.ff_in.data.data(), t.mixed.row(i).data(), hrow.data(), d, hidden);
    for (std::size_t c = 0; c < hidden; ++c) hrow[c] = std::tanh(hrow[c] + p.ff_in_bias.data[c]);
    auto s = t.states.row(i);
    k.gemv_t(p.ff_out.data.data(), hrow.data(), s.data(), hidden, d);
    const auto z = t.mixed.row(i);
    for (std::size_t c = 0; c < d; ++c) s[c] += p.ff_out_bias.data[c] + (residual ? z[c] : 0.0);
  }

  t.pooled.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) k.axpy(1.0, t.states.row(i).data(), t.pooled.data(), d);
  for (double& v : t.pooled) v /= static_cast<double>(n);
}

void span_logits(const Model& model, const Tensor& states, Tensor& logits) {
  const auto& k = kernels::active();
  const std::size_t d = model.config.embed_dim;
  logits = Tensor(states.rows(), kNumTags);
  for (std::size_t i = 0; i < states.rows(); ++i) {
    auto row = logits.row(i);
    k.gemv_t(model.params.span_w.data.data(), states.row(i).data(), row.data(), d, kNumTags);
    for (std::size_t j = 0; j < kNumTags; ++j) row[j] += model.params.span_b.data[j];
  }
}

std::array<double, kNumRiskLevels> cls_logits(const Model& model, std::span<const double> pooled) {
  std::array<double, kNumRiskLevels> logits{};
  kernels::active().gemv_t(model.params.cls_w.data.data(), pooled.data(), logits.data(),
                           model.config.embed_dim, kNumRiskLevels);
  for (std::size_t j = 0; j < kNumRiskLevels; ++j) logits[j] += model.params.cls_b.data[j];
  return logits;
}

}  // namespace

void softmax_inplace(std::span<double> logits) {
  if (logits.empty()) return;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

Model init_model(const ModelConfig& config, const Vocab& vocab) {
  config.validate();
  Model m{config, vocab, shaped_parameters(config, vocab.size())};
  Rng rng(config.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
  m.params.for_each([&](std::string_view name, Tensor& t) {
    if (is_bias(name)) return;
    for (double& v : t.data) v = rng.uniform(-bound, bound);
  });
  return m;
}

ForwardTrace forward_traced(const Model& model, std::span<const std::int32_t> ids) {
  ForwardTrace t;
  run_encoder(model, ids, t);
  span_logits(model, t.states, t.span_logits);
  t.span_probs = t.span_logits;
  for (std::size_t i = 0; i < t.span_probs.rows(); ++i) softmax_inplace(t.span_probs.row(i));
  t.cls_logits = cls_logits(model, t.pooled);
  t.cls_probs = t.cls_logits;
  softmax_inplace(t.cls_probs);
  return t;
}

Encoding encode(const Model& model, std::span<const std::int32_t> ids) {
  ForwardTrace t;
  run_encoder(model, ids, t);
  return Encoding{std::move(t.states), std::move(t.pooled)};
}

std::vector<TagDistribution> span_head(const Model& model, const Tensor& states) {
  Tensor logits;
  span_logits(model, states, logits);
  std::vector<TagDistribution> out(states.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto row = logits.row(i);
    softmax_inplace(row);
    std::copy(row.begin(), row.end(), out[i].begin());
  }
  return out;
}

RiskDistribution cls_head(const Model& model, std::span<const double> pooled) {
  RiskDistribution p = cls_logits(model, pooled);
  softmax_inplace(p);
  return p;
}

ModelOutput forward_ids(const Model& model, std::span<const std::int32_t> ids) {
  const bool truncated = ids.size() > model.config.max_len;
  ForwardTrace t = forward_traced(model, ids.first(std::min(ids.size(), model.config.max_len)));
  ModelOutput out;
  out.truncated = truncated;
  out.p_span.resize(t.span_probs.rows());
  for (std::size_t i = 0; i < out.p_span.size(); ++i) {
    const auto row = t.span_probs.row(i);
    std::copy(row.begin(), row.end(), out.p_span[i].begin());
  }
  out.p_cls = t.cls_probs;
  out.states = std::move(t.states);
  out.pooled = std::move(t.pooled);
  return out;
}

ModelOutput forward(const Model& model, std::span<const Token> tokens) {
  return forward_ids(model, model.vocab.encode(tokens));
}

// ---------------------------------------------------------------------------
// Serialization

std::string model_to_json(const Model& model) {
  ojson j;
  j["format_version"] = "1";
  ojson cfg;
  cfg["embed_dim"] = model.config.embed_dim;
  cfg["encoder_kind"] = std::string(encoder_name(model.config.encoder_kind));
  cfg["attention_dim"] = model.config.attention_dim;
  cfg["max_len"] = model.config.max_len;
  cfg["seed"] = model.config.seed;
  j["config"] = std::move(cfg);
  j["vocab_min_count"] = model.vocab.min_count();
  j["vocab"] = model.vocab.terms();
  ojson params = ojson::object();
  model.params.for_each([&](std::string_view name, const Tensor& t) {
    ojson p;
    p["shape"] = t.shape;
    p["data"] = t.data;
    params[std::string(name)] = std::move(p);
  });
  j["params"] = std::move(params);
  return j.dump();
}

Model model_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedModel, std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || !j.contains("format_version")) {
      throw Error(ErrorCode::MalformedModel, "missing format_version");
    }
    const auto& version = j.at("format_version");
    if (!version.is_string() || version.get<std::string>() != "1") {
      throw Error(ErrorCode::UnsupportedVersion, "unsupported model format_version " + version.dump());
    }
    const auto& cfg = j.at("config");
    ModelConfig config;
    config.embed_dim = cfg.at("embed_dim").get<std::size_t>();
    config.encoder_kind = parse_encoder(cfg.at("encoder_kind").get<std::string>());
    config.attention_dim = cfg.at("attention_dim").get<std::size_t>();
    config.max_len = cfg.at("max_len").get<std::size_t>();
    config.seed = cfg.at("seed").get<std::uint64_t>();
    config.validate();

    Vocab vocab(j.at("vocab").get<std::vector<std::string>>(), j.value("vocab_min_count", std::size_t{1}));
    Model m{config, vocab, shaped_parameters(config, vocab.size())};
    const auto& params = j.at("params");
    if (!params.is_object()) throw Error(ErrorCode::MalformedModel, "params must be an object");
    std::size_t seen = 0;
    m.params.for_each([&](std::string_view name, Tensor& t) {
      const auto it = params.find(std::string(name));
      if (it == params.end()) throw Error(ErrorCode::MalformedModel, "missing parameter " + std::string(name));
      const auto shape = it->at("shape").get<std::vector<std::size_t>>();
      if (shape != t.shape) {
        throw Error(ErrorCode::ShapeMismatch, "parameter " + std::string(name) + " has shape " +
                                                  it->at("shape").dump() + ", config implies " + ojson(t.shape).dump());
      }
      const auto& data = it->at("data");
      if (!data.is_array() || data.size() != t.size()) {
        throw Error(ErrorCode::ShapeMismatch, "parameter " + std::string(name) + " data length disagrees with shape");
      }
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (!data[i].is_number()) throw Error(ErrorCode::MalformedModel, "non-numeric value in " + std::string(name));
        t.data[i] = data[i].get<double>();
        if (!std::isfinite(t.data[i])) throw Error(ErrorCode::MalformedModel, "non-finite value in " + std::string(name));
      }
      ++seen;
    });
    if (seen != params.size()) throw Error(ErrorCode::MalformedModel, "unexpected parameters for this encoder kind");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedModel, e.what());
  }
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write model file " + path.string());
  out << model_to_json(model) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open model file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace riskspan
