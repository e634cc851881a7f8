// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "slim/attention.hpp"
#include "slim/kvcache.hpp"
#include "slim/tensor.hpp"

namespace slim {

enum class CacheDtype { kF32, kInt8 };

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t d_model = 64;
  std::size_t n_head = 4;
  std::size_t n_kv_head = 2;
  std::size_t head_size = 16;
  std::size_t ffn_dim = 128;
  std::size_t vocab = 256;
  std::size_t max_seq = 128;
  CacheDtype cache_dtype = CacheDtype::kF32;
  AttentionKernel kernel = AttentionKernel::kSlim;

  // d_model == n_head * head_size, n_head % n_kv_head == 0, head_size even
  // (rotary pairs), ffn_dim % n_head == 0 (reduction block granularity).
  void validate() const;

  AttentionParams attention_params(bool causal) const;
};

struct LayerWeights {
  Tensor wq;       // [d_model x n_head*head_size]
  Tensor wk, wv;   // [d_model x n_kv_head*head_size]
  Tensor wo;       // [n_head*head_size x d_model]
  Tensor w_gate, w_up;  // [d_model x ffn_dim]
  Tensor w_down;        // [ffn_dim x d_model]
  std::vector<float> attn_norm, ffn_norm;  // rms gains [d_model]
};

// Fully determined by (config, seed); the lm head is the embedding table.
struct DecoderWeights {
  Tensor embedding;  // [vocab x d_model]
  std::vector<LayerWeights> layers;
  std::vector<float> final_norm;
};

// Deterministic synthetic weights from the counter-based generator. Tensors
// draw from per-tensor streams in a fixed order (embedding, then per layer
// wq wk wv wo w_gate w_up w_down attn_norm ffn_norm, then final_norm).
// Projection values are uniform [-1,1) / sqrt(d_model); the residual-writing
// projections (wo, w_down) carry an extra 1/sqrt(2*layers); norm gains are
// 1 + 0.25 * uniform[-1,1).
DecoderWeights synth_weights(const ModelConfig& config, std::uint64_t seed);

// FNV-1a over the f32 bit patterns of all weights in stream order; the
// regression fixture for weight determinism.
std::uint64_t weights_fingerprint(const DecoderWeights& w);

enum class PostOp { kNone, kBiasSilu, kBiasGelu, kResidualAdd };

// matmul followed by the named post-op applied in place on the product.
// kBiasSilu / kBiasGelu take aux as a [1 x n] bias (nullptr = zero bias);
// kResidualAdd takes aux as an [m x n] addend (required).
Tensor fused_matmul(const Tensor& x, const Tensor& w, PostOp post,
                    const Tensor* aux = nullptr);
void fused_matmul_into(std::span<float> out, const Tensor& x, const Tensor& w,
                       PostOp post, const Tensor* aux = nullptr);

// x / sqrt(mean(x^2) + 1e-5) * gain, per row.
Tensor rmsnorm_rows(const Tensor& x, std::span<const float> gain);

// Interleaved rotary embedding applied in place to every head slice of every
// row; row i sits at position start_pos + i. Pair j of a head rotates by
// angle pos * 10000^(-2j / head_size).
void rope_rows(Tensor& x, std::size_t n_heads, std::size_t head_size,
               std::size_t start_pos);

enum class SampleMode { kGreedy, kTopK };

struct SamplerConfig {
  SampleMode mode = SampleMode::kGreedy;
  std::size_t k = 1;
  std::uint64_t seed = 0;
};

// Greedy: argmax with lowest-token-id tie break. Top-k: renormalized softmax
// over the k largest logits (ordered logit desc, token asc), inverted through
// one uniform draw from the counter generator at (seed, step).
std::int32_t sample(const Tensor& logits, const SamplerConfig& sampler,
                    std::uint64_t step);

struct GenerateStats {
  double prefill_seconds = 0.0;
  std::vector<double> step_seconds;
};

// Decoder-only toy transformer: rmsnorm -> attention -> residual, rmsnorm ->
// SwiGLU ffn -> residual per layer, rotary positions, tied lm head. One
// instance serves one generation at a time; weights are shared and immutable.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(const ModelConfig& config, std::shared_ptr<const DecoderWeights> weights);

  const ModelConfig& config() const { return config_; }
  const DecoderWeights& weights() const { return *weights_; }
  std::shared_ptr<const DecoderWeights> shared_weights() const { return weights_; }

  // Tokens processed so far (cache fill).
  std::size_t pos() const { return pos_; }
  void reset();

  // Causal forward over the whole prompt with the configured kernel,
  // populating the cache at every position; returns last-position logits.
  Tensor prefill(std::span<const std::int32_t> tokens);

  // Appends one token's K/V per layer and attends over the cache (hybrid
  // INT8 path when cache_dtype is int8); returns logits.
  Tensor decode_step(std::int32_t token);

  std::vector<std::int32_t> generate(std::span<const std::int32_t> prompt,
                                     std::size_t n_out, const SamplerConfig& sampler,
                                     GenerateStats* stats = nullptr);

 private:
  Tensor forward(const Tensor& embedded, std::size_t start_pos, bool prefill_path);
  Tensor embed(std::span<const std::int32_t> tokens) const;
  Tensor attend_cached(const Tensor& q_rows, std::size_t layer, std::size_t t);

  ModelConfig config_;
  std::shared_ptr<const DecoderWeights> weights_;
  std::optional<Int8KvCache> cache_i8_;
  std::optional<F32KvCache> cache_f32_;
  std::size_t pos_ = 0;
};

}  // namespace slim
