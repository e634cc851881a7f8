// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "slim/errors.hpp"
#include "slim/model.hpp"
#include "slim/rng.hpp"
#include "slim/topk.hpp"

using namespace slim;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed,
                     std::uint64_t stream, float scale = 1.0f) {
  CounterRng rng(seed, stream);
  Tensor t({r, c});
  for (float& v : t.flat()) v = rng.next_signed() * scale;
  return t;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  float m = 0.0f;
  for (std::size_t e = 0; e < a.numel(); ++e)
    m = std::max(m, std::fabs(a.data()[e] - b.data()[e]));
  return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.layers = 2;
  c.d_model = 32;
  c.n_head = 4;
  c.n_kv_head = 2;
  c.head_size = 8;
  c.ffn_dim = 64;
  c.vocab = 64;
  c.max_seq = 32;
  return c;
}

// Cache-free full forward: plain composition of the layer math with the
// naive attention kernel and unblocked matmuls. Independent of the cached
// prefill/decode paths it checks.
Tensor forward_oracle(const ModelConfig& cfg, const DecoderWeights& w,
                      std::span<const std::int32_t> tokens) {
  Tensor x({tokens.size(), cfg.d_model});
  for (std::size_t i = 0; i < tokens.size(); ++i)
    std::copy_n(w.embedding.data() + static_cast<std::size_t>(tokens[i]) * cfg.d_model,
                cfg.d_model, x.data() + i * cfg.d_model);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const LayerWeights& lw = w.layers[l];
    Tensor normed = rmsnorm_rows(x, lw.attn_norm);
    Tensor q = matmul(normed, lw.wq);
    Tensor k = matmul(normed, lw.wk);
    Tensor v = matmul(normed, lw.wv);
    rope_rows(q, cfg.n_head, cfg.head_size, 0);
    rope_rows(k, cfg.n_kv_head, cfg.head_size, 0);
    Tensor attn = multihead_attention(q, k, v, cfg.attention_params(true),
                                      AttentionKernel::kNaive);
    Tensor attn_out = matmul(attn, lw.wo);
    for (std::size_t e = 0; e < x.numel(); ++e)
      x.data()[e] += attn_out.data()[e];

    Tensor normed2 = rmsnorm_rows(x, lw.ffn_norm);
    Tensor gate = matmul(normed2, lw.w_gate);
    Tensor up = matmul(normed2, lw.w_up);
    for (std::size_t e = 0; e < gate.numel(); ++e) {
      const float g = gate.data()[e];
      gate.data()[e] = g / (1.0f + std::exp(-g)) * up.data()[e];
    }
    Tensor down = matmul(gate, lw.w_down);
    for (std::size_t e = 0; e < x.numel(); ++e) x.data()[e] += down.data()[e];
  }
  Tensor last({1, cfg.d_model});
  std::copy_n(x.data() + (tokens.size() - 1) * cfg.d_model, cfg.d_model,
              last.data());
  return matmul(rmsnorm_rows(last, w.final_norm), w.embedding, true);
}

std::vector<std::int32_t> random_prompt(const ModelConfig& cfg, std::uint64_t seed,
                                        std::size_t len) {
  CounterRng rng(seed, 0xF00D);
  std::vector<std::int32_t> prompt(len);
  for (auto& t : prompt)
    t = static_cast<std::int32_t>(rng.next_below(cfg.vocab));
  return prompt;
}

}  // namespace

TEST_CASE("synthetic weights are deterministic per seed") {
  ModelConfig cfg = tiny_config();
  DecoderWeights a = synth_weights(cfg, 9);
  DecoderWeights b = synth_weights(cfg, 9);
  CHECK(weights_fingerprint(a) == weights_fingerprint(b));
  CHECK(bit_equal(a.embedding, b.embedding));
  CHECK(bit_equal(a.layers[1].w_down, b.layers[1].w_down));

  DecoderWeights c = synth_weights(cfg, 10);
  CHECK(weights_fingerprint(a) != weights_fingerprint(c));
}

TEST_CASE("weights fingerprint regression fixture") {
  // layers=2, d_model=32, seed=1; pinned once from the generator.
  CHECK(weights_fingerprint(synth_weights(tiny_config(), 1)) ==
        0x13da042d19e13970ull);
}

TEST_CASE("config validation") {
  ModelConfig c = tiny_config();
  c.d_model = 30;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.n_kv_head = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.head_size = 7;
  c.d_model = 28;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // odd rotary pairs
  c = tiny_config();
  c.ffn_dim = 66;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // block granularity
}

TEST_CASE("fused matmul with no post-op is plain matmul") {
  Tensor x = random_tensor(3, 5, 19, 0);
  Tensor w = random_tensor(5, 4, 19, 1);
  CHECK(bit_equal(fused_matmul(x, w, PostOp::kNone), matmul(x, w)));
}

TEST_CASE("fused bias-silu with identity input and zero bias is silu(w)") {
  Tensor w = random_tensor(4, 4, 19, 2, 3.0f);
  Tensor out = fused_matmul(Tensor::identity(4), w, PostOp::kBiasSilu);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double v = w.at(i, j);
      CHECK(out.at(i, j) == doctest::Approx(v / (1.0 + std::exp(-v))).epsilon(1e-6));
    }
}

TEST_CASE("fused post-ops equal the unfused composition, seed 19") {
  Tensor x = random_tensor(4, 6, 19, 3);
  Tensor w = random_tensor(6, 5, 19, 4);
  Tensor bias = random_tensor(1, 5, 19, 5);
  Tensor residual = random_tensor(4, 5, 19, 6);

  Tensor plain = matmul(x, w);

  Tensor silu_ref = plain;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const float v = silu_ref.at(i, j) + bias.at(0, j);
      silu_ref.at(i, j) = v / (1.0f + std::exp(-v));
    }
  CHECK(max_abs_diff(fused_matmul(x, w, PostOp::kBiasSilu, &bias), silu_ref) <=
        1e-6f);

  Tensor gelu_ref = plain;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const float v = gelu_ref.at(i, j) + bias.at(0, j);
      gelu_ref.at(i, j) = 0.5f * v * (1.0f + std::erf(v * 0.70710678f));
    }
  CHECK(max_abs_diff(fused_matmul(x, w, PostOp::kBiasGelu, &bias), gelu_ref) <=
        1e-6f);

  Tensor res_ref = plain;
  for (std::size_t e = 0; e < res_ref.numel(); ++e)
    res_ref.data()[e] += residual.data()[e];
  CHECK(bit_equal(fused_matmul(x, w, PostOp::kResidualAdd, &residual), res_ref));

  CHECK_THROWS_AS(fused_matmul(x, w, PostOp::kResidualAdd), DimensionError);
  Tensor bad_bias({1, 3});
  CHECK_THROWS_AS(fused_matmul(x, w, PostOp::kBiasSilu, &bad_bias), DimensionError);
}

TEST_CASE("rotary embedding basics") {
  Tensor x = random_tensor(3, 16, 33, 0);
  Tensor at_zero = x;
  rope_rows(at_zero, 2, 8, 0);
  // Position 0 row is untouched; later rows rotate.
  for (std::size_t j = 0; j < 16; ++j) CHECK(at_zero.at(0, j) == x.at(0, j));
  CHECK(max_abs_diff(at_zero, x) > 1e-3f);

  // Rotations preserve pair norms.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t p = 0; p < 4; ++p) {
        const float a0 = x.at(i, h * 8 + 2 * p), a1 = x.at(i, h * 8 + 2 * p + 1);
        const float b0 = at_zero.at(i, h * 8 + 2 * p),
                    b1 = at_zero.at(i, h * 8 + 2 * p + 1);
        CHECK(a0 * a0 + a1 * a1 == doctest::Approx(b0 * b0 + b1 * b1).epsilon(1e-5));
      }
}

TEST_CASE("prefill matches the cache-free forward oracle") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 21);
  const std::vector<std::int32_t> prompt = random_prompt(cfg, 21, 9);
  Tensor logits = model.prefill(prompt);
  CHECK(max_abs_diff(logits, forward_oracle(cfg, model.weights(), prompt)) <=
        1e-5f);
}

TEST_CASE("single-token prompt goes through the same contract") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 22);
  const std::vector<std::int32_t> prompt = {5};
  Tensor logits = model.prefill(prompt);
  CHECK(max_abs_diff(logits, forward_oracle(cfg, model.weights(), prompt)) <=
        1e-5f);
}

TEST_CASE("attention kernels are interchangeable at the logit level") {
  ModelConfig cfg = tiny_config();
  const std::vector<std::int32_t> prompt = random_prompt(cfg, 23, 8);
  std::vector<Tensor> logits;
  for (AttentionKernel kern : {AttentionKernel::kNaive, AttentionKernel::kSlim,
                               AttentionKernel::kFlash}) {
    ModelConfig c = cfg;
    c.kernel = kern;
    Model model(c, 23);
    logits.push_back(model.prefill(prompt));
  }
  CHECK(max_abs_diff(logits[1], logits[0]) <= 1e-4f);
  CHECK(max_abs_diff(logits[2], logits[0]) <= 1e-4f);
}

TEST_CASE("teacher forcing: decode continues prefill at any split") {
  ModelConfig cfg = tiny_config();
  const std::vector<std::int32_t> prompt = random_prompt(cfg, 24, 10);
  Model full(cfg, 24);
  Tensor expect = full.prefill(prompt);

  for (std::size_t split : {std::size_t{1}, std::size_t{5}, std::size_t{9}}) {
    Model part(cfg, 24);
    part.prefill(std::span(prompt).first(split));
    Tensor logits;
    for (std::size_t i = split; i < prompt.size(); ++i)
      logits = part.decode_step(prompt[i]);
    CHECK(max_abs_diff(logits, expect) <= 1e-4f);
  }
}

TEST_CASE("int8 cache tracks the f32 cache closely over 16 steps") {
  ModelConfig cfg = tiny_config();
  cfg.max_seq = 40;
  const std::vector<std::int32_t> prompt = random_prompt(cfg, 25, 6);

  Model f32_model(cfg, 25);
  cfg.cache_dtype = CacheDtype::kInt8;
  Model int8_model(cfg, f32_model.shared_weights());

  Tensor la = f32_model.prefill(prompt);
  Tensor lb = int8_model.prefill(prompt);
  float worst = max_abs_diff(la, lb);
  CounterRng feed(25, 0xFEED);
  for (int s = 0; s < 16; ++s) {
    const std::int32_t tok =
        static_cast<std::int32_t>(feed.next_below(cfg.vocab));
    worst = std::max(worst,
                     max_abs_diff(f32_model.decode_step(tok), int8_model.decode_step(tok)));
  }
  CHECK(worst <= 0.05f);
}

TEST_CASE("capacity errors on overlong inputs") {
  ModelConfig cfg = tiny_config();
  cfg.max_seq = 8;
  Model model(cfg, 26);
  const std::vector<std::int32_t> long_prompt = random_prompt(cfg, 26, 9);
  CHECK_THROWS_AS(model.prefill(long_prompt), CapacityError);

  const std::vector<std::int32_t> prompt = random_prompt(cfg, 26, 8);
  model.prefill(prompt);
  CHECK_THROWS_AS(model.decode_step(0), CapacityError);
  CHECK_THROWS_AS(
      model.generate(prompt, 1, SamplerConfig{}), CapacityError);
}

TEST_CASE("greedy sampling breaks ties toward the lower token id") {
  Tensor logits = Tensor::from({{0, 5, 5}});
  CHECK(sample(logits, SamplerConfig{}, 0) == 1);
}

TEST_CASE("one-hot logits always win under top-k") {
  Tensor logits({1, 8});
  for (std::size_t j = 0; j < 8; ++j) logits.at(0, j) = -40.0f;
  logits.at(0, 6) = 40.0f;
  SamplerConfig topk;
  topk.mode = SampleMode::kTopK;
  topk.k = 4;
  topk.seed = 5;
  for (std::uint64_t step = 0; step < 32; ++step)
    CHECK(sample(logits, topk, step) == 6);
}

TEST_CASE("top-k with k = vocab matches full softmax sampling (chi-squared)") {
  Tensor logits = Tensor::from({{0.1f, 0.8f, -0.3f, 0.5f, 0.0f}});
  SamplerConfig topk;
  topk.mode = SampleMode::kTopK;
  topk.k = 5;
  topk.seed = 77;

  double probs[5], z = 0.0;
  for (int i = 0; i < 5; ++i) {
    probs[i] = std::exp(static_cast<double>(logits.at(0, i)));
    z += probs[i];
  }
  int counts[5] = {0, 0, 0, 0, 0};
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) ++counts[sample(logits, topk, d)];
  double chi2 = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double expected = probs[i] / z * draws;
    chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
  }
  CHECK(chi2 < 18.467);  // 99.9% quantile, 4 dof; 1.50 with this seed
}

TEST_CASE("sampler validation") {
  Tensor logits({1, 4});
  SamplerConfig bad;
  bad.mode = SampleMode::kTopK;
  bad.k = 5;
  CHECK_THROWS_AS(sample(logits, bad, 0), ConfigError);
  bad.k = 0;
  CHECK_THROWS_AS(sample(logits, bad, 0), ConfigError);
  Tensor nan_logits = Tensor::from({{1.0f, NAN}});
  CHECK_THROWS_AS(sample(nan_logits, SamplerConfig{}, 0), ConfigError);
}

TEST_CASE("generate with zero output tokens is empty") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 27);
  CHECK(model.generate(random_prompt(cfg, 27, 4), 0, SamplerConfig{}).empty());
}

TEST_CASE("greedy generation is deterministic") {
  ModelConfig cfg = tiny_config();
  const std::vector<std::int32_t> prompt = random_prompt(cfg, 28, 4);
  Model a(cfg, 28);
  Model b(cfg, 28);
  GenerateStats stats;
  const auto ta = a.generate(prompt, 12, SamplerConfig{}, &stats);
  const auto tb = b.generate(prompt, 12, SamplerConfig{});
  CHECK(ta == tb);
  CHECK(stats.step_seconds.size() == 12);
  CHECK(stats.prefill_seconds > 0.0);
}

TEST_CASE("seeded top-k generation is reproducible") {
  ModelConfig cfg = tiny_config();
  const std::vector<std::int32_t> prompt = random_prompt(cfg, 29, 4);
  SamplerConfig topk;
  topk.mode = SampleMode::kTopK;
  topk.k = 8;
  topk.seed = 123;
  Model a(cfg, 29);
  Model b(cfg, 29);
  CHECK(a.generate(prompt, 12, topk) == b.generate(prompt, 12, topk));
}
