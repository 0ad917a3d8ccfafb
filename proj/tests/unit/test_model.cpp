#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "riskspan/error.hpp"
#include "riskspan/kernels.hpp"
#include "riskspan/model.hpp"
#include "riskspan/rng.hpp"

using namespace riskspan;

namespace {

Vocab small_vocab(std::size_t n) {
  std::vector<std::string> terms = {std::string(Vocab::kUnkTerm)};
  for (std::size_t i = 1; i < n; ++i) terms.push_back("w" + std::to_string(i));
  return Vocab(terms);
}

Model small_model(EncoderKind kind, std::uint64_t seed, std::size_t max_len = 16) {
  ModelConfig c;
  c.embed_dim = 6;
  c.attention_dim = 5;
  c.encoder_kind = kind;
  c.max_len = max_len;
  c.seed = seed;
  return init_model(c, small_vocab(12));
}

std::vector<std::int32_t> random_ids(std::mt19937_64& gen, std::size_t n, std::int32_t vocab) {
  std::vector<std::int32_t> ids(n);
  for (auto& id : ids) id = static_cast<std::int32_t>(gen() % static_cast<std::uint64_t>(vocab));
  return ids;
}

ErrorCode load_error(const std::string& text) {
  try {
    model_from_json(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a load error");
  return ErrorCode::Io;
}

void check_distribution(std::span<const double> p) {
  double sum = 0.0;
  for (double v : p) {
    CHECK(v > 0.0);
    sum += v;
  }
  CHECK(std::abs(sum - 1.0) <= 1e-12);
}

}  // namespace

TEST_CASE("init is deterministic, bounded and zero-biased") {
  ModelConfig c;
  c.embed_dim = 32;
  c.attention_dim = 16;
  const Vocab vocab = small_vocab(100);
  const Model a = init_model(c, vocab);
  const Model b = init_model(c, vocab);
  CHECK(a == b);
  CHECK(a.params.embedding.rows() == 100);
  CHECK(a.params.embedding.cols() == 32);
  CHECK(a.params.embedding.size() == 3200);
  const double bound = 1.0 / std::sqrt(32.0);
  a.params.for_each([&](std::string_view name, const Tensor& t) {
    const bool bias = name.ends_with("_b") || name.ends_with("_bias");
    for (double v : t.data) {
      if (bias) {
        CHECK(v == 0.0);
      } else {
        CHECK(v > -bound);
        CHECK(v < bound);
      }
    }
  });
  ModelConfig other = c;
  other.seed = 1;
  CHECK(!(init_model(other, vocab) == a));
}

TEST_CASE("window_mean parameter set omits attention tensors") {
  const Model m = small_model(EncoderKind::WindowMean, 0);
  CHECK(m.params.query.empty());
  CHECK(m.params.output.empty());
  const Model s = small_model(EncoderKind::SelfAttention, 0);
  CHECK(s.params.scalar_count() == m.params.scalar_count() + 3 * 6 * 5 + 5 * 6);
}

TEST_CASE("window_mean with one token uses that token alone") {
  Model m = small_model(EncoderKind::WindowMean, 3);
  const std::vector<std::int32_t> ids = {4};
  const Encoding enc = encode(m, ids);
  // Oracle: H = W2^T tanh(W1^T x + b1) + b2 with x = E[4] + P[0].
  const std::size_t d = 6, h = 12;
  std::vector<double> x(d), hidden(h), out(d);
  for (std::size_t c = 0; c < d; ++c) x[c] = m.params.embedding.at(4, c) + m.params.position.at(0, c);
  for (std::size_t j = 0; j < h; ++j) {
    double s = m.params.ff_in_bias.data[j];
    for (std::size_t c = 0; c < d; ++c) s += m.params.ff_in.at(c, j) * x[c];
    hidden[j] = std::tanh(s);
  }
  for (std::size_t c = 0; c < d; ++c) {
    double s = m.params.ff_out_bias.data[c];
    for (std::size_t j = 0; j < h; ++j) s += m.params.ff_out.at(j, c) * hidden[j];
    CHECK(enc.states.at(0, c) == doctest::Approx(s).epsilon(1e-13));
    CHECK(enc.pooled[c] == enc.states.at(0, c));
  }
}

TEST_CASE("self-attention with zero query and key is residual mean mixing") {
  std::mt19937_64 gen(9);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Model m = small_model(EncoderKind::SelfAttention, seed);
    m.params.query.fill(0.0);
    m.params.key.fill(0.0);
    const std::size_t n = 1 + gen() % 7, d = 6, da = 5, h = 12;
    const auto ids = random_ids(gen, n, 12);
    const ForwardTrace t = forward_traced(m, ids);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) CHECK(t.attention.at(i, j) == doctest::Approx(1.0 / n).epsilon(1e-14));
    }

    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    std::vector<double> vbar(da, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < d; ++c) x[i][c] = m.params.embedding.at(ids[i], c) + m.params.position.at(i, c);
      for (std::size_t a = 0; a < da; ++a) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += m.params.value.at(c, a) * x[i][c];
        vbar[a] += s / static_cast<double>(n);
      }
    }
    std::vector<double> mix(d);
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t a = 0; a < da; ++a) s += m.params.output.at(a, c) * vbar[a];
      mix[c] = s;
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> z(d), hidden(h);
      for (std::size_t c = 0; c < d; ++c) z[c] = x[i][c] + mix[c];
      for (std::size_t j = 0; j < h; ++j) {
        double s = m.params.ff_in_bias.data[j];
        for (std::size_t c = 0; c < d; ++c) s += m.params.ff_in.at(c, j) * z[c];
        hidden[j] = std::tanh(s);
      }
      for (std::size_t c = 0; c < d; ++c) {
        double s = z[c] + m.params.ff_out_bias.data[c];
        for (std::size_t j = 0; j < h; ++j) s += m.params.ff_out.at(j, c) * hidden[j];
        CHECK(std::abs(t.states.at(i, c) - s) <= 1e-12);
      }
    }
  }
}

TEST_CASE("window_mean locality under a far swap") {
  const Model m = small_model(EncoderKind::WindowMean, 5);
  std::vector<std::int32_t> ids = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  auto swapped = ids;
  std::swap(swapped[0], swapped[9]);
  const Encoding a = encode(m, ids);
  const Encoding b = encode(m, swapped);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const bool affected = i <= 2 || i >= 7;
    bool same = true;
    for (std::size_t c = 0; c < 6; ++c) same = same && a.states.at(i, c) == b.states.at(i, c);
    CHECK(same == !affected);
  }
}

TEST_CASE("heads with zero weights are uniform") {
  Model m = small_model(EncoderKind::SelfAttention, 1);
  m.params.span_w.fill(0.0);
  m.params.cls_w.fill(0.0);
  const std::vector<std::int32_t> ids = {1, 2, 3};
  const ModelOutput out = forward_ids(m, ids);
  for (const auto& row : out.p_span) {
    for (double p : row) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  for (double p : out.p_cls) CHECK(p == 0.25);

  m.params.cls_b.data = {50.0, 0.0, 0.0, 0.0};
  const RiskDistribution sharp = cls_head(m, out.pooled);
  CHECK(sharp[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sharp[1] < 1e-20);
}

TEST_CASE("softmax is shift invariant") {
  std::vector<double> a = {0.3, -1.2, 2.5}, b = {100.3, 98.8, 102.5};
  softmax_inplace(a);
  softmax_inplace(b);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  std::vector<double> huge = {1000.0, 0.0};
  softmax_inplace(huge);
  CHECK(huge[0] == 1.0);
  CHECK(std::isfinite(huge[1]));
}

TEST_CASE("forward shapes, normalisation and determinism on random inputs") {
  std::mt19937_64 gen(4);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Model m = small_model(seed % 2 ? EncoderKind::WindowMean : EncoderKind::SelfAttention, seed);
    const std::size_t n = 1 + gen() % 16;
    const auto ids = random_ids(gen, n, 12);
    const ModelOutput out = forward_ids(m, ids);
    REQUIRE(out.p_span.size() == n);
    CHECK(out.states.rows() == n);
    CHECK_FALSE(out.truncated);
    for (double v : out.states.data) CHECK(std::isfinite(v));
    for (const auto& row : out.p_span) check_distribution(row);
    check_distribution(out.p_cls);
    const ModelOutput again = forward_ids(m, ids);
    CHECK(again.p_span == out.p_span);
    CHECK(again.p_cls == out.p_cls);
  }
}

TEST_CASE("inputs beyond max_len are truncated and flagged") {
  const Model m = small_model(EncoderKind::SelfAttention, 2, 8);
  std::vector<std::int32_t> ids(18, 3);
  const ModelOutput out = forward_ids(m, ids);
  CHECK(out.truncated);
  CHECK(out.p_span.size() == 8);
  const ModelOutput head = forward_ids(m, std::span<const std::int32_t>(ids).first(8));
  CHECK(head.p_cls == out.p_cls);
}

TEST_CASE("encode rejects bad ids and empty input") {
  const Model m = small_model(EncoderKind::WindowMean, 0);
  const std::vector<std::int32_t> bad = {1, 12};
  CHECK_THROWS_AS(encode(m, bad), Error);
  CHECK_THROWS_AS(encode(m, std::vector<std::int32_t>{}), Error);
}

TEST_CASE("save and load reproduce outputs bit for bit") {
  const auto path = std::filesystem::temp_directory_path() / "riskspan_model_roundtrip.json";
  std::mt19937_64 gen(8);
  for (EncoderKind kind : {EncoderKind::WindowMean, EncoderKind::SelfAttention}) {
    const Model m = small_model(kind, 17);
    save_model(m, path);
    const Model loaded = load_model(path);
    CHECK(loaded == m);
    for (int trial = 0; trial < 20; ++trial) {
      const auto ids = random_ids(gen, 1 + gen() % 10, 12);
      const ModelOutput a = forward_ids(m, ids), b = forward_ids(loaded, ids);
      CHECK(a.p_span == b.p_span);
      CHECK(a.p_cls == b.p_cls);
      CHECK(a.states == b.states);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("load errors") {
  const Model m = small_model(EncoderKind::SelfAttention, 0);
  const std::string good = model_to_json(m);
  CHECK_NOTHROW(model_from_json(good));

  std::string v0 = good;
  v0.replace(v0.find("\"format_version\":\"1\""), 20, "\"format_version\":\"0\"");
  CHECK(load_error(v0) == ErrorCode::UnsupportedVersion);

  CHECK(load_error(good.substr(0, good.size() / 2)) == ErrorCode::MalformedModel);

  std::string bad_shape = good;
  const auto pos = bad_shape.find("\"cls_b\":{\"shape\":[4]");
  REQUIRE(pos != std::string::npos);
  bad_shape.replace(pos, 20, "\"cls_b\":{\"shape\":[5]");
  CHECK(load_error(bad_shape) == ErrorCode::ShapeMismatch);

  CHECK_THROWS_AS(load_model("/nonexistent/dir/model.json"), Error);
}

TEST_CASE("scalar and avx2 forward passes agree") {
  if (!kernels::isa_available(kernels::Isa::Avx2)) return;
  const auto original = kernels::active_isa();
  const Model m = small_model(EncoderKind::SelfAttention, 6);
  const std::vector<std::int32_t> ids = {1, 5, 7, 2, 9, 11, 3};
  kernels::force_isa(kernels::Isa::Scalar);
  const ModelOutput s = forward_ids(m, ids);
  kernels::force_isa(kernels::Isa::Avx2);
  const ModelOutput v = forward_ids(m, ids);
  kernels::force_isa(original);
  for (std::size_t i = 0; i < s.states.size(); ++i) CHECK(std::abs(s.states.data[i] - v.states.data[i]) <= 1e-12);
  for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(s.p_cls[j] - v.p_cls[j]) <= 1e-12);
}

TEST_CASE("encoder names round trip") {
  CHECK(parse_encoder(encoder_name(EncoderKind::WindowMean)) == EncoderKind::WindowMean);
  CHECK(parse_encoder("self_attention") == EncoderKind::SelfAttention);
  CHECK_THROWS_AS(parse_encoder("lstm"), Error);
}
