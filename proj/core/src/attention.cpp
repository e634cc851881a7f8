// SPDX-License-Identifier: Apache-2.0
#include "slim/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "slim/errors.hpp"

namespace slim {

namespace {

constexpr float kMaskValue = std::numeric_limits<float>::lowest();

// Index of the last key position query row i may attend.
inline std::size_t causal_limit(std::size_t i, std::size_t lq, std::size_t lk) {
  return lk - lq + i;
}

void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v,
               const AttentionParams& p) {
  p.validate();
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw DimensionError("attention operands must be rank 2");
  if (q.cols() != p.head_size)
    throw DimensionError("query width " + q.shape_str() + " != head_size " +
                         std::to_string(p.head_size));
  if (k.cols() != q.cols() || v.cols() != q.cols())
    throw DimensionError("q/k/v widths disagree: " + q.shape_str() + " " +
                         k.shape_str() + " " + v.shape_str());
  if (k.rows() != v.rows())
    throw DimensionError("k/v lengths disagree: " + k.shape_str() + " vs " +
                         v.shape_str());
  if (p.causal && q.rows() > k.rows())
    throw DimensionError("causal attention requires Lq <= Lk, got " +
                         q.shape_str() + " vs " + k.shape_str());
}

// Scores for one query row: dot against every key row, scaled, then masked.
void score_row(std::span<float> dst, std::span<const float> qrow,
               const Tensor& k, float scale, bool causal, std::size_t qi,
               std::size_t lq) {
  const std::size_t lk = k.rows();
  const std::size_t d = k.cols();
  for (std::size_t j = 0; j < lk; ++j) {
    const float* krow = k.data() + j * d;
    float acc = 0.0f;
    for (std::size_t t = 0; t < d; ++t) acc += qrow[t] * krow[t];
    dst[j] = scale * acc;
  }
  if (causal) {
    for (std::size_t j = causal_limit(qi, lq, lk) + 1; j < lk; ++j)
      dst[j] = kMaskValue;
  }
}

// out_row[j] = sum_t probs[t] * v[t][j], ascending t.
void weighted_value_row(std::span<float> out_row, std::span<const float> probs,
                        const Tensor& v) {
  std::fill(out_row.begin(), out_row.end(), 0.0f);
  const std::size_t d = v.cols();
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const float pv = probs[t];
    const float* vrow = v.data() + t * d;
    for (std::size_t j = 0; j < d; ++j) out_row[j] += pv * vrow[j];
  }
}

}  // namespace

const char* kernel_name(AttentionKernel k) {
  switch (k) {
    case AttentionKernel::kNaive: return "naive";
    case AttentionKernel::kSlim: return "slim";
    case AttentionKernel::kFlash: return "flash";
  }
  return "?";
}

float AttentionParams::effective_scale() const {
  if (scale > 0.0f) return scale;
  return 1.0f / std::sqrt(static_cast<float>(head_size));
}

void AttentionParams::validate() const {
  if (head_size == 0) throw DimensionError("head_size must be >= 1");
  if (n_head == 0 || n_kv_head == 0)
    throw DimensionError("head counts must be >= 1");
  if (n_head % n_kv_head != 0)
    throw DimensionError("n_head " + std::to_string(n_head) +
                         " not divisible by n_kv_head " + std::to_string(n_kv_head));
  if (slim_block_rows == 0) throw DimensionError("slim_block_rows must be >= 1");
  if (flash_tile_q == 0 || flash_tile_k == 0)
    throw DimensionError("flash tiles must be >= 1");
}

Tensor attention_naive(const Tensor& q, const Tensor& k, const Tensor& v,
                       const AttentionParams& p) {
  check_qkv(q, k, v, p);
  const std::size_t lq = q.rows();
  const std::size_t lk = k.rows();
  const float scale = p.effective_scale();

  Tensor scores = matmul(q, k, /*transpose_b=*/true);
  for (std::size_t i = 0; i < lq; ++i) {
    std::span<float> row = scores.row(i);
    for (float& s : row) s *= scale;
    if (p.causal)
      for (std::size_t j = causal_limit(i, lq, lk) + 1; j < lk; ++j)
        row[j] = kMaskValue;
  }
  Tensor probs = softmax_rows(scores);
  return matmul(probs, v);
}

Tensor attention_slim(const Tensor& q, const Tensor& k, const Tensor& v,
                      const AttentionParams& p, ScoreBuffer& buf) {
  check_qkv(q, k, v, p);
  const std::size_t lq = q.rows();
  const std::size_t lk = k.rows();
  const std::size_t block = p.slim_block_rows;
  if (buf.rows() < block || buf.cols() < lk)
    throw CapacityError("score buffer " + std::to_string(buf.rows()) + "x" +
                        std::to_string(buf.cols()) + " too small for block " +
                        std::to_string(block) + " over " + std::to_string(lk) +
                        " keys");
  const float scale = p.effective_scale();

  Tensor out({lq, q.cols()});
  for (std::size_t b0 = 0; b0 < lq; b0 += block) {
    const std::size_t bend = std::min(b0 + block, lq);
    for (std::size_t i = b0; i < bend; ++i) {
      std::span<float> score = buf.row(i - b0).subspan(0, lk);
      score_row(score, q.row(i), k, scale, p.causal, i, lq);
      softmax_row_inplace(score);
      weighted_value_row(out.row(i), score, v);
    }
  }
  return out;
}

Tensor attention_flash(const Tensor& q, const Tensor& k, const Tensor& v,
                       const AttentionParams& p) {
  check_qkv(q, k, v, p);
  const std::size_t lq = q.rows();
  const std::size_t lk = k.rows();
  const std::size_t d = q.cols();
  const std::size_t tq = p.flash_tile_q;
  const std::size_t tk = p.flash_tile_k;
  const float scale = p.effective_scale();
  constexpr float kNegInf = -std::numeric_limits<float>::infinity();

  Tensor out({lq, d});
  std::vector<float> stile(tq * tk);       // score tile
  std::vector<float> row_max(tq);          // running max per query row
  std::vector<float> row_sum(tq);          // running softmax denominator
  std::vector<float> acc(tq * d);          // unnormalized partial output

  for (std::size_t q0 = 0; q0 < lq; q0 += tq) {
    const std::size_t qn = std::min(tq, lq - q0);
    std::fill(row_max.begin(), row_max.begin() + qn, kNegInf);
    std::fill(row_sum.begin(), row_sum.begin() + qn, 0.0f);
    std::fill(acc.begin(), acc.begin() + qn * d, 0.0f);

    for (std::size_t k0 = 0; k0 < lk; k0 += tk) {
      const std::size_t kn = std::min(tk, lk - k0);
      for (std::size_t i = 0; i < qn; ++i) {
        const float* qrow = q.data() + (q0 + i) * d;
        float* srow = stile.data() + i * kn;
        const std::size_t limit =
            p.causal ? causal_limit(q0 + i, lq, lk) : lk - 1;
        for (std::size_t j = 0; j < kn; ++j) {
          if (k0 + j > limit) {
            srow[j] = kMaskValue;
            continue;
          }
          const float* krow = k.data() + (k0 + j) * d;
          float dot = 0.0f;
          for (std::size_t t = 0; t < d; ++t) dot += qrow[t] * krow[t];
          srow[j] = scale * dot;
        }

        float tile_max = srow[0];
        for (std::size_t j = 1; j < kn; ++j) tile_max = std::max(tile_max, srow[j]);
        const float new_max = std::max(row_max[i], tile_max);
        // new_max is finite after the first tile (masked scores are the
        // lowest finite float, not -inf), so exp never sees NaN.
        const float correction =
            row_max[i] == kNegInf ? 0.0f : std::exp(row_max[i] - new_max);

        float psum = 0.0f;
        for (std::size_t j = 0; j < kn; ++j) {
          srow[j] = std::exp(srow[j] - new_max);
          psum += srow[j];
        }
        row_sum[i] = row_sum[i] * correction + psum;
        float* arow = acc.data() + i * d;
        for (std::size_t t = 0; t < d; ++t) arow[t] *= correction;
        for (std::size_t j = 0; j < kn; ++j) {
          const float pv = srow[j];
          const float* vrow = v.data() + (k0 + j) * d;
          for (std::size_t t = 0; t < d; ++t) arow[t] += pv * vrow[t];
        }
        row_max[i] = new_max;
      }
    }

    for (std::size_t i = 0; i < qn; ++i) {
      const float inv = 1.0f / row_sum[i];
      float* orow = out.data() + (q0 + i) * d;
      const float* arow = acc.data() + i * d;
      for (std::size_t t = 0; t < d; ++t) orow[t] = arow[t] * inv;
    }
  }
  return out;
}

Tensor attention_decode(const Tensor& q_one, const QuantRowsView& cache_k,
                        const QuantRowsView& cache_v, const AttentionParams& p,
                        std::size_t t) {
  p.validate();
  if (q_one.rank() != 2 || q_one.rows() != 1 || q_one.cols() != p.head_size)
    throw DimensionError("decode query must be [1 x head_size], got " +
                         q_one.shape_str());
  if (t > cache_k.rows || t > cache_v.rows)
    throw RangeError("decode over " + std::to_string(t) + " tokens but cache holds " +
                     std::to_string(std::min(cache_k.rows, cache_v.rows)));
  if (t == 0) throw RangeError("decode over empty cache");
  if (cache_k.cols != p.head_size || cache_v.cols != p.head_size)
    throw DimensionError("cache width != head_size");

  const QuantRowsView kv{t, cache_k.cols, cache_k.values, cache_k.scales};
  const QuantRowsView vv{t, cache_v.cols, cache_v.values, cache_v.scales};

  Tensor scores = matmul_hybrid(q_one, kv);
  const float scale = p.effective_scale();
  for (float& s : scores.flat()) s *= scale;
  softmax_row_inplace(scores.flat());
  return matmul_hybrid_rows(scores, vv);
}

Tensor attention_decode_f32(const Tensor& q_one, std::span<const float> k,
                            std::span<const float> v, const AttentionParams& p,
                            std::size_t t) {
  p.validate();
  const std::size_t d = p.head_size;
  if (q_one.rank() != 2 || q_one.rows() != 1 || q_one.cols() != d)
    throw DimensionError("decode query must be [1 x head_size], got " +
                         q_one.shape_str());
  if (k.size() < t * d || v.size() < t * d)
    throw RangeError("decode over " + std::to_string(t) +
                     " tokens but the f32 cache span is shorter");
  if (t == 0) throw RangeError("decode over empty cache");

  const float scale = p.effective_scale();
  std::vector<float> score(t);
  const float* qrow = q_one.data();
  for (std::size_t j = 0; j < t; ++j) {
    const float* krow = k.data() + j * d;
    float acc = 0.0f;
    for (std::size_t x = 0; x < d; ++x) acc += qrow[x] * krow[x];
    score[j] = scale * acc;
  }
  softmax_row_inplace(score);

  Tensor out({1, d});
  float* orow = out.data();
  for (std::size_t j = 0; j < t; ++j) {
    const float pv = score[j];
    const float* vrow = v.data() + j * d;
    for (std::size_t x = 0; x < d; ++x) orow[x] += pv * vrow[x];
  }
  return out;
}

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                           const AttentionParams& p, AttentionKernel kernel) {
  p.validate();
  const std::size_t d = p.head_size;
  if (q.rank() != 2 || q.cols() != p.n_head * d)
    throw DimensionError("multihead q must be [L x n_head*head_size], got " +
                         q.shape_str());
  if (k.rank() != 2 || k.cols() != p.n_kv_head * d || !k.same_shape(v))
    throw DimensionError("multihead k/v must be [L x n_kv_head*head_size], got " +
                         k.shape_str() + " and " + v.shape_str());
  const std::size_t lq = q.rows();
  const std::size_t lk = k.rows();
  const std::size_t group = p.n_head / p.n_kv_head;

  AttentionParams single = p;
  single.n_head = 1;
  single.n_kv_head = 1;

  Tensor out({lq, p.n_head * d});
  Tensor qh({lq, d}), kh({lk, d}), vh({lk, d});
  ScoreBuffer buf(p.slim_block_rows, lk);
  for (std::size_t h = 0; h < p.n_head; ++h) {
    const std::size_t kvh = h / group;
    for (std::size_t i = 0; i < lq; ++i)
      std::copy_n(q.data() + i * q.cols() + h * d, d, qh.data() + i * d);
    for (std::size_t i = 0; i < lk; ++i) {
      std::copy_n(k.data() + i * k.cols() + kvh * d, d, kh.data() + i * d);
      std::copy_n(v.data() + i * v.cols() + kvh * d, d, vh.data() + i * d);
    }
    Tensor oh;
    switch (kernel) {
      case AttentionKernel::kNaive: oh = attention_naive(qh, kh, vh, single); break;
      case AttentionKernel::kSlim: oh = attention_slim(qh, kh, vh, single, buf); break;
      case AttentionKernel::kFlash: oh = attention_flash(qh, kh, vh, single); break;
    }
    for (std::size_t i = 0; i < lq; ++i)
      std::copy_n(oh.data() + i * d, d, out.data() + i * out.cols() + h * d);
  }
  return out;
}

}  // namespace slim
