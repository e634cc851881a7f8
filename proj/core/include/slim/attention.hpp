// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "slim/tensor.hpp"

namespace slim {

enum class AttentionKernel { kNaive, kSlim, kFlash };

const char* kernel_name(AttentionKernel k);

struct AttentionParams {
  std::size_t n_head = 1;
  std::size_t n_kv_head = 1;
  std::size_t head_size = 0;
  bool causal = false;
  float scale = 0.0f;  // <= 0 selects the default 1/sqrt(head_size)
  std::size_t slim_block_rows = 8;
  std::size_t flash_tile_q = 8;
  std::size_t flash_tile_k = 8;

  float effective_scale() const;
  void validate() const;
};

// Scratch for the slim kernel: `rows` score rows of width `cols`, reused
// across successive query blocks without reallocation.
class ScoreBuffer {
 public:
  ScoreBuffer(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<float> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<float> data_;
};

// Reference kernel: out = softmax(scale * q k^T + causal_mask) v with the
// full score matrix materialized. Query row i may attend key positions
// <= Lk - Lq + i when causal.
Tensor attention_naive(const Tensor& q, const Tensor& k, const Tensor& v,
                       const AttentionParams& p);

// Slim kernel: blocks over query rows. Each block computes its full-width
// score rows into `buf`, applies an exact row softmax (no online
// corrections), multiplies by v, then reuses the buffer for the next block.
// Allocation-free after the output tensor is created.
Tensor attention_slim(const Tensor& q, const Tensor& k, const Tensor& v,
                      const AttentionParams& p, ScoreBuffer& buf);

// Flash-style kernel: tiles over query rows and key columns, maintaining
// running row max/sum statistics and rescaling the partial output per key
// tile (online softmax).
Tensor attention_flash(const Tensor& q, const Tensor& k, const Tensor& v,
                       const AttentionParams& p);

// Single-query decode over the first `t` rows of an INT8 cache view. Scores
// use the hybrid matmul against the transposed key store; the weighted value
// sum uses the row-oriented hybrid kernel.
Tensor attention_decode(const Tensor& q_one, const QuantRowsView& cache_k,
                        const QuantRowsView& cache_v, const AttentionParams& p,
                        std::size_t t);

// Single-query decode over f32 K/V spans of t rows x head_size.
Tensor attention_decode_f32(const Tensor& q_one, std::span<const float> k,
                            std::span<const float> v, const AttentionParams& p,
                            std::size_t t);

// Head split/merge wrapper. q is [L x n_head*head_size], k and v are
// [L x n_kv_head*head_size]; query head h attends kv head
// h / (n_head / n_kv_head).
Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                           const AttentionParams& p,
                           AttentionKernel kernel = AttentionKernel::kSlim);

}  // namespace slim
