// SPDX-License-Identifier: Apache-2.0
#include "slim/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "slim/errors.hpp"
#include "slim/rng.hpp"
#include "slim/topk.hpp"

namespace slim {

namespace {

constexpr float kRmsEps = 1e-5f;
constexpr double kRopeBase = 10000.0;

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void fill_uniform(std::span<float> dst, CounterRng& rng, float scale) {
  for (float& v : dst) v = rng.next_signed() * scale;
}

// Residual-writing matmuls are evaluated as a sum of per-block partials over
// the contraction axis (ascending block index, each partial fully formed
// before it is added). The tensor-parallel reduction sums the same blocks in
// the same order, which is what makes sharded and plain decoding bit-equal.
void blocked_matmul_sum_into(std::span<float> out, const Tensor& x,
                             const Tensor& w, std::size_t n_blocks) {
  const std::size_t m = x.rows();
  const std::size_t k = x.cols();
  const std::size_t n = w.cols();
  if (w.rows() != k || k % n_blocks != 0)
    throw DimensionError("blocked matmul: " + x.shape_str() + " x " +
                         w.shape_str() + " in " + std::to_string(n_blocks) +
                         " blocks");
  const std::size_t bk = k / n_blocks;
  std::fill(out.begin(), out.end(), 0.0f);
  std::vector<float> partial(m * n);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    std::fill(partial.begin(), partial.end(), 0.0f);
    for (std::size_t i = 0; i < m; ++i) {
      const float* xrow = x.data() + i * k + b * bk;
      float* prow = partial.data() + i * n;
      for (std::size_t t = 0; t < bk; ++t) {
        const float xv = xrow[t];
        const float* wrow = w.data() + (b * bk + t) * n;
        for (std::size_t j = 0; j < n; ++j) prow[j] += xv * wrow[j];
      }
    }
    for (std::size_t e = 0; e < out.size(); ++e) out[e] += partial[e];
  }
}

void add_inplace(Tensor& x, std::span<const float> addend) {
  float* p = x.data();
  for (std::size_t e = 0; e < x.numel(); ++e) p[e] += addend[e];
}

float silu(float v) { return v / (1.0f + std::exp(-v)); }
float gelu(float v) {
  return 0.5f * v * (1.0f + std::erf(v * 0.70710678118654752f));
}

}  // namespace

void ModelConfig::validate() const {
  if (layers == 0 || d_model == 0 || n_head == 0 || n_kv_head == 0 ||
      head_size == 0 || ffn_dim == 0 || vocab == 0 || max_seq == 0)
    throw ConfigError("model dimensions must be >= 1");
  if (d_model != n_head * head_size)
    throw ConfigError("d_model " + std::to_string(d_model) + " != n_head*head_size " +
                      std::to_string(n_head * head_size));
  if (n_head % n_kv_head != 0)
    throw ConfigError("n_head " + std::to_string(n_head) +
                      " not divisible by n_kv_head " + std::to_string(n_kv_head));
  if (head_size % 2 != 0)
    throw ConfigError("head_size must be even for rotary pairs");
  if (ffn_dim % n_head != 0)
    throw ConfigError("ffn_dim " + std::to_string(ffn_dim) +
                      " not divisible by n_head " + std::to_string(n_head) +
                      " (reduction block granularity)");
}

AttentionParams ModelConfig::attention_params(bool causal) const {
  AttentionParams p;
  p.n_head = n_head;
  p.n_kv_head = n_kv_head;
  p.head_size = head_size;
  p.causal = causal;
  return p;
}

DecoderWeights synth_weights(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const float proj = 1.0f / std::sqrt(static_cast<float>(config.d_model));
  // GPT-2 style damping of the projections that write into the residual
  // stream, so the stream stays embedding-dominated at toy depth.
  const float resid = proj / (2.0f * static_cast<float>(config.layers));

  DecoderWeights w;
  std::uint64_t stream = 0;
  auto draw = [&](Tensor& t, float scale) {
    CounterRng rng(seed, stream++);
    fill_uniform(t.flat(), rng, scale);
  };
  auto draw_gain = [&](std::vector<float>& g) {
    g.resize(config.d_model);
    CounterRng rng(seed, stream++);
    for (float& v : g) v = 1.0f + 0.25f * rng.next_signed();
  };

  w.embedding = Tensor({config.vocab, config.d_model});
  draw(w.embedding, proj);
  w.layers.resize(config.layers);
  for (LayerWeights& lw : w.layers) {
    lw.wq = Tensor({config.d_model, config.n_head * config.head_size});
    draw(lw.wq, proj);
    lw.wk = Tensor({config.d_model, config.n_kv_head * config.head_size});
    draw(lw.wk, proj);
    lw.wv = Tensor({config.d_model, config.n_kv_head * config.head_size});
    draw(lw.wv, proj);
    lw.wo = Tensor({config.n_head * config.head_size, config.d_model});
    draw(lw.wo, resid);
    lw.w_gate = Tensor({config.d_model, config.ffn_dim});
    draw(lw.w_gate, proj);
    lw.w_up = Tensor({config.d_model, config.ffn_dim});
    draw(lw.w_up, proj);
    lw.w_down = Tensor({config.ffn_dim, config.d_model});
    draw(lw.w_down, resid);
    draw_gain(lw.attn_norm);
    draw_gain(lw.ffn_norm);
  }
  draw_gain(w.final_norm);
  return w;
}

std::uint64_t weights_fingerprint(const DecoderWeights& w) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](std::span<const float> vals) {
    for (float f : vals) {
      std::uint32_t bits;
      static_assert(sizeof(bits) == sizeof(f));
      __builtin_memcpy(&bits, &f, sizeof(bits));
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 0x100000001b3ull;
      }
    }
  };
  mix(w.embedding.flat());
  for (const LayerWeights& lw : w.layers) {
    mix(lw.wq.flat());
    mix(lw.wk.flat());
    mix(lw.wv.flat());
    mix(lw.wo.flat());
    mix(lw.w_gate.flat());
    mix(lw.w_up.flat());
    mix(lw.w_down.flat());
    mix(lw.attn_norm);
    mix(lw.ffn_norm);
  }
  mix(w.final_norm);
  return h;
}

void fused_matmul_into(std::span<float> out, const Tensor& x, const Tensor& w,
                       PostOp post, const Tensor* aux) {
  matmul_into(out, x, w, /*transpose_b=*/false);
  const std::size_t m = x.rows();
  const std::size_t n = w.cols();
  switch (post) {
    case PostOp::kNone:
      break;
    case PostOp::kBiasSilu:
    case PostOp::kBiasGelu: {
      if (aux && (aux->rank() != 2 || aux->rows() != 1 || aux->cols() != n))
        throw DimensionError("bias must be [1x" + std::to_string(n) + "], got " +
                             aux->shape_str());
      const float* bias = aux ? aux->data() : nullptr;
      for (std::size_t i = 0; i < m; ++i) {
        float* row = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          const float v = row[j] + (bias ? bias[j] : 0.0f);
          row[j] = post == PostOp::kBiasSilu ? silu(v) : gelu(v);
        }
      }
      break;
    }
    case PostOp::kResidualAdd: {
      if (!aux || aux->rank() != 2 || aux->rows() != m || aux->cols() != n)
        throw DimensionError("residual addend must be [" + std::to_string(m) +
                             "x" + std::to_string(n) + "]");
      const float* r = aux->data();
      for (std::size_t e = 0; e < m * n; ++e) out[e] += r[e];
      break;
    }
  }
}

Tensor fused_matmul(const Tensor& x, const Tensor& w, PostOp post,
                    const Tensor* aux) {
  Tensor out({x.rows(), w.cols()});
  fused_matmul_into(out.flat(), x, w, post, aux);
  return out;
}

Tensor rmsnorm_rows(const Tensor& x, std::span<const float> gain) {
  if (x.cols() != gain.size())
    throw DimensionError("rmsnorm gain length " + std::to_string(gain.size()) +
                         " != row width " + std::to_string(x.cols()));
  Tensor out({x.rows(), x.cols()});
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const float* src = x.data() + i * n;
    float ss = 0.0f;
    for (std::size_t j = 0; j < n; ++j) ss += src[j] * src[j];
    const float inv = 1.0f / std::sqrt(ss / static_cast<float>(n) + kRmsEps);
    float* dst = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) dst[j] = src[j] * inv * gain[j];
  }
  return out;
}

void rope_rows(Tensor& x, std::size_t n_heads, std::size_t head_size,
               std::size_t start_pos) {
  if (x.cols() != n_heads * head_size)
    throw DimensionError("rope width " + std::to_string(x.cols()) + " != " +
                         std::to_string(n_heads) + "*" + std::to_string(head_size));
  if (head_size % 2 != 0) throw DimensionError("rope head_size must be even");
  const std::size_t half = head_size / 2;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double pos = static_cast<double>(start_pos + i);
    float* row = x.data() + i * x.cols();
    for (std::size_t j = 0; j < half; ++j) {
      const double angle =
          pos * std::pow(kRopeBase, -2.0 * static_cast<double>(j) /
                                        static_cast<double>(head_size));
      const float c = static_cast<float>(std::cos(angle));
      const float s = static_cast<float>(std::sin(angle));
      for (std::size_t h = 0; h < n_heads; ++h) {
        float* pair = row + h * head_size + 2 * j;
        const float x0 = pair[0];
        const float x1 = pair[1];
        pair[0] = x0 * c - x1 * s;
        pair[1] = x0 * s + x1 * c;
      }
    }
  }
}

std::int32_t sample(const Tensor& logits, const SamplerConfig& sampler,
                    std::uint64_t step) {
  if (logits.rank() != 2 || logits.rows() != 1)
    throw DimensionError("logits must be [1 x vocab], got " + logits.shape_str());
  if (!logits.all_finite()) throw ConfigError("logits must be finite");
  const std::size_t vocab = logits.cols();

  if (sampler.mode == SampleMode::kGreedy) {
    std::size_t best = 0;
    const float* p = logits.data();
    for (std::size_t i = 1; i < vocab; ++i)
      if (p[i] > p[best]) best = i;  // strict > keeps the lowest id on ties
    return static_cast<std::int32_t>(best);
  }

  if (sampler.k == 0 || sampler.k > vocab)
    throw ConfigError("top-k k=" + std::to_string(sampler.k) +
                      " outside [1, vocab=" + std::to_string(vocab) + "]");
  const std::vector<TopKEntry> entries =
      select_topk(logits.row(0), sampler.k, 0);
  return sample_from_entries(entries, sampler.seed, step);
}

Model::Model(const ModelConfig& config, std::uint64_t seed)
    : Model(config, std::make_shared<const DecoderWeights>(
                        synth_weights(config, seed))) {}

Model::Model(const ModelConfig& config, std::shared_ptr<const DecoderWeights> weights)
    : config_(config), weights_(std::move(weights)) {
  config_.validate();
  reset();
}

void Model::reset() {
  pos_ = 0;
  cache_i8_.reset();
  cache_f32_.reset();
  if (config_.cache_dtype == CacheDtype::kInt8)
    cache_i8_.emplace(config_.layers, 1, config_.n_kv_head, config_.head_size,
                      config_.max_seq);
  else
    cache_f32_.emplace(config_.layers, 1, config_.n_kv_head, config_.head_size,
                       config_.max_seq);
}

Tensor Model::embed(std::span<const std::int32_t> tokens) const {
  Tensor x({tokens.size(), config_.d_model});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::int32_t t = tokens[i];
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab)
      throw RangeError("token id " + std::to_string(t) + " outside vocab " +
                       std::to_string(config_.vocab));
    std::copy_n(weights_->embedding.data() + static_cast<std::size_t>(t) * config_.d_model,
                config_.d_model, x.data() + i * config_.d_model);
  }
  return x;
}

Tensor Model::attend_cached(const Tensor& q_rows, std::size_t layer, std::size_t t) {
  const std::size_t hs = config_.head_size;
  const std::size_t group = config_.n_head / config_.n_kv_head;
  AttentionParams single;
  single.head_size = hs;

  Tensor out({1, config_.n_head * hs});
  Tensor qh({1, hs});
  for (std::size_t h = 0; h < config_.n_head; ++h) {
    std::copy_n(q_rows.data() + h * hs, hs, qh.data());
    const std::size_t kvh = h / group;
    Tensor oh;
    if (cache_i8_) {
      oh = attention_decode(qh, cache_i8_->key_head(layer, 0, kvh, t),
                            cache_i8_->value_head(layer, 0, kvh, t), single, t);
    } else {
      oh = attention_decode_f32(qh, cache_f32_->key_head(layer, 0, kvh, t),
                                cache_f32_->value_head(layer, 0, kvh, t), single, t);
    }
    std::copy_n(oh.data(), hs, out.data() + h * hs);
  }
  return out;
}

Tensor Model::forward(const Tensor& embedded, std::size_t start_pos,
                      bool prefill_path) {
  const std::size_t seq = embedded.rows();
  const std::size_t d = config_.d_model;
  const std::size_t hs = config_.head_size;

  Tensor x = embedded;
  std::vector<float> reduced(seq * d);
  for (std::size_t layer = 0; layer < config_.layers; ++layer) {
    const LayerWeights& lw = weights_->layers[layer];

    Tensor normed = rmsnorm_rows(x, lw.attn_norm);
    Tensor q = matmul(normed, lw.wq);
    Tensor k = matmul(normed, lw.wk);
    Tensor v = matmul(normed, lw.wv);
    rope_rows(q, config_.n_head, hs, start_pos);
    rope_rows(k, config_.n_kv_head, hs, start_pos);

    for (std::size_t i = 0; i < seq; ++i) {
      Tensor kv_slice({config_.n_kv_head, hs});
      std::copy_n(k.data() + i * k.cols(), k.cols(), kv_slice.data());
      Tensor v_slice({config_.n_kv_head, hs});
      std::copy_n(v.data() + i * v.cols(), v.cols(), v_slice.data());
      if (cache_i8_)
        cache_i8_->append_token(layer, 0, kv_slice, v_slice);
      else
        cache_f32_->append_token(layer, 0, kv_slice, v_slice);
    }

    Tensor attn;
    if (prefill_path) {
      attn = multihead_attention(q, k, v, config_.attention_params(true),
                                 config_.kernel);
    } else {
      attn = attend_cached(q, layer, start_pos + 1);
    }
    blocked_matmul_sum_into(reduced, attn, lw.wo, config_.n_head);
    add_inplace(x, reduced);

    Tensor normed2 = rmsnorm_rows(x, lw.ffn_norm);
    Tensor gate = fused_matmul(normed2, lw.w_gate, PostOp::kBiasSilu);
    Tensor up = matmul(normed2, lw.w_up);
    float* gp = gate.data();
    const float* upp = up.data();
    for (std::size_t e = 0; e < gate.numel(); ++e) gp[e] *= upp[e];
    blocked_matmul_sum_into(reduced, gate, lw.w_down, config_.n_head);
    add_inplace(x, reduced);
  }

  Tensor last({1, d});
  std::copy_n(x.data() + (seq - 1) * d, d, last.data());
  Tensor final_norm = rmsnorm_rows(last, weights_->final_norm);
  return matmul(final_norm, weights_->embedding, /*transpose_b=*/true);
}

Tensor Model::prefill(std::span<const std::int32_t> tokens) {
  if (tokens.empty()) throw ConfigError("prefill requires at least one token");
  if (pos_ + tokens.size() > config_.max_seq)
    throw CapacityError("prompt of " + std::to_string(tokens.size()) +
                        " tokens exceeds max_seq " + std::to_string(config_.max_seq) +
                        " at position " + std::to_string(pos_));
  Tensor logits = forward(embed(tokens), pos_, /*prefill_path=*/true);
  pos_ += tokens.size();
  return logits;
}

Tensor Model::decode_step(std::int32_t token) {
  if (pos_ >= config_.max_seq)
    throw CapacityError("cache full at max_seq " + std::to_string(config_.max_seq));
  const std::int32_t toks[1] = {token};
  Tensor logits = forward(embed(toks), pos_, /*prefill_path=*/false);
  pos_ += 1;
  return logits;
}

std::vector<std::int32_t> Model::generate(std::span<const std::int32_t> prompt,
                                          std::size_t n_out,
                                          const SamplerConfig& sampler,
                                          GenerateStats* stats) {
  if (prompt.size() + n_out > config_.max_seq)
    throw CapacityError("prompt+output " +
                        std::to_string(prompt.size() + n_out) + " exceeds max_seq " +
                        std::to_string(config_.max_seq));
  double t0 = now_seconds();
  Tensor logits = prefill(prompt);
  if (stats) {
    stats->prefill_seconds = now_seconds() - t0;
    stats->step_seconds.clear();
  }

  // Output token 0 falls out of prefill ("first token"); every later token
  // costs one decode step plus a sample.
  std::vector<std::int32_t> out;
  out.reserve(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    t0 = now_seconds();
    if (i > 0) logits = decode_step(out.back());
    out.push_back(sample(logits, sampler, i));
    if (stats) stats->step_seconds.push_back(now_seconds() - t0);
  }
  return out;
}

}  // namespace slim
