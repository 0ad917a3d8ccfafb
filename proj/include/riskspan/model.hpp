#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "riskspan/tensor.hpp"
#include "riskspan/text.hpp"
#include "riskspan/types.hpp"

namespace riskspan {

enum class EncoderKind { WindowMean, SelfAttention };

std::string_view encoder_name(EncoderKind kind);
/// Accepts "window_mean" and "self_attention".
EncoderKind parse_encoder(std::string_view name);

struct ModelConfig {
  std::size_t embed_dim = 32;
  EncoderKind encoder_kind = EncoderKind::SelfAttention;
  std::size_t attention_dim = 32;
  std::size_t max_len = 512;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument on zero dimensions.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Every trainable tensor. Tensors unused by the configured encoder stay
/// empty. `Gradients` reuses this layout.
struct Parameters {
  Tensor embedding;  // [vocab x d]
  Tensor position;   // [max_len x d]
  Tensor query;      // [d x da]   self_attention only
  Tensor key;        // [d x da]
  Tensor value;      // [d x da]
  Tensor output;     // [da x d]
  Tensor ff_in;      // [d x 2d]
  Tensor ff_in_bias; // [2d]
  Tensor ff_out;     // [2d x d]
  Tensor ff_out_bias;// [d]
  Tensor span_w;     // [d x 3]
  Tensor span_b;     // [3]
  Tensor cls_w;      // [d x 4]
  Tensor cls_b;      // [4]

  template <class F>
  void for_each(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit_impl(*this, f);
  }

  Parameters zeros_like() const;
  std::size_t scalar_count() const;

  friend bool operator==(const Parameters&, const Parameters&) = default;

private:
  template <class Self, class F>
  static void visit_impl(Self& p, F& f) {
    auto visit = [&](std::string_view name, auto& t) {
      if (!t.empty()) f(name, t);
    };
    visit("embedding", p.embedding);
    visit("position", p.position);
    visit("query", p.query);
    visit("key", p.key);
    visit("value", p.value);
    visit("output", p.output);
    visit("ff_in", p.ff_in);
    visit("ff_in_bias", p.ff_in_bias);
    visit("ff_out", p.ff_out);
    visit("ff_out_bias", p.ff_out_bias);
    visit("span_w", p.span_w);
    visit("span_b", p.span_b);
    visit("cls_w", p.cls_w);
    visit("cls_b", p.cls_b);
  }
};

using Gradients = Parameters;

struct Model {
  ModelConfig config;
  Vocab vocab;
  Parameters params;

  friend bool operator==(const Model&, const Model&) = default;
};

using TagDistribution = std::array<double, kNumTags>;

struct Encoding {
  Tensor states;               // H [n x d]
  std::vector<double> pooled;  // h [d]
};

struct ModelOutput {
  Tensor states;
  std::vector<double> pooled;
  std::vector<TagDistribution> p_span;  // [n x 3] over (B, I, O)
  RiskDistribution p_cls{};
  bool truncated = false;
};

/// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardTrace {
  std::vector<std::int32_t> ids;
  Tensor inputs;       // x = E[id] + P[pos]          [n x d]
  Tensor queries;      // self_attention: x Wq         [n x da]
  Tensor keys;
  Tensor values;
  Tensor attention;    // row-softmax weights          [n x n]
  Tensor context;      // attention * values           [n x da]
  Tensor mixed;        // FF input: z (attention) or window mean   [n x d]
  Tensor hidden;       // tanh(z W1 + b1)              [n x 2d]
  Tensor states;       // H                            [n x d]
  std::vector<double> pooled;
  Tensor span_logits;  // [n x 3]
  Tensor span_probs;
  std::array<double, kNumRiskLevels> cls_logits{};
  RiskDistribution cls_probs{};
};

/// Parameters ~ U(-1/sqrt(d), 1/sqrt(d)) from config.seed; biases zero.
Model init_model(const ModelConfig& config, const Vocab& vocab);

/// Numerically stable in-place softmax.
void softmax_inplace(std::span<double> logits);

Encoding encode(const Model& model, std::span<const std::int32_t> ids);
std::vector<TagDistribution> span_head(const Model& model, const Tensor& states);
RiskDistribution cls_head(const Model& model, std::span<const double> pooled);

/// Runs on the first max_len ids; `truncated` reports whether any were cut.
ModelOutput forward_ids(const Model& model, std::span<const std::int32_t> ids);
ModelOutput forward(const Model& model, std::span<const Token> tokens);

ForwardTrace forward_traced(const Model& model, std::span<const std::int32_t> ids);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
std::string model_to_json(const Model& model);
Model model_from_json(std::string_view text);

}  // namespace riskspan
