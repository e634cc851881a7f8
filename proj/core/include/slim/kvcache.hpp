// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "slim/tensor.hpp"

namespace slim {

// Inputs to the cache volume formula: bytes touched per generated token are
// 2 * batch * (input_len + output_len) * layers * kv_heads * head_size *
// dtype_bytes (the 2 covers key and value).
struct KvCacheSpec {
  std::uint64_t batch = 1;
  std::uint64_t input_len = 1;
  std::uint64_t output_len = 0;
  std::uint64_t layers = 1;
  std::uint64_t kv_heads = 1;
  std::uint64_t head_size = 1;
  std::uint64_t dtype_bytes = 2;

  void validate() const;
};

// Payload bytes of the full cache. Throws OverflowError if the product
// exceeds 64 bits.
std::uint64_t cache_bytes(const KvCacheSpec& spec);

// INT8 payload (dtype_bytes forced to 1) plus one scale of `scale_bytes` per
// (token, head) slice for both key and value stores.
std::uint64_t cache_bytes_with_scales(const KvCacheSpec& spec,
                                      std::uint64_t scale_bytes);

// Append-only per-layer INT8 key/value store. Every appended (token, head)
// slice of head_size elements is quantized independently, so each carries its
// own scale. Rows for one head are stored contiguously (head-major), which
// lets read_head hand out zero-copy views for the hybrid matmul.
class Int8KvCache {
 public:
  Int8KvCache(std::size_t layers, std::size_t seqs, std::size_t kv_heads,
              std::size_t head_size, std::size_t capacity);

  // k_heads and v_heads are [kv_heads x head_size]: one row per head for the
  // new token. Layer 0 must be appended first at each position; the sequence
  // length is the layer-0 fill count. Returns the token's position.
  std::size_t append_token(std::size_t layer, std::size_t seq,
                           const Tensor& k_heads, const Tensor& v_heads);

  // First `upto` cached rows of one head, without copying the payload.
  QuantRowsView key_head(std::size_t layer, std::size_t seq, std::size_t head,
                         std::size_t upto) const;
  QuantRowsView value_head(std::size_t layer, std::size_t seq, std::size_t head,
                           std::size_t upto) const;

  std::size_t length(std::size_t seq) const;
  std::size_t capacity() const { return capacity_; }
  std::size_t layers() const { return layers_; }
  std::size_t kv_heads() const { return kv_heads_; }

 private:
  struct Store {
    std::vector<std::int8_t> values;  // [kv_heads * capacity x head_size]
    std::vector<float> scales;        // [kv_heads * capacity]
  };

  const Store& store(std::size_t layer, std::size_t seq, bool value_side) const;
  Store& store(std::size_t layer, std::size_t seq, bool value_side);
  QuantRowsView head_view(const Store& s, std::size_t head, std::size_t upto) const;
  void check_layer_seq(std::size_t layer, std::size_t seq) const;

  std::size_t layers_;
  std::size_t seqs_;
  std::size_t kv_heads_;
  std::size_t head_size_;
  std::size_t capacity_;
  std::vector<Store> stores_;               // [layer][seq][k|v] flattened
  std::vector<std::vector<std::size_t>> fill_;  // [layer][seq] tokens appended
};

// f32 twin of Int8KvCache with the same head-major layout and append
// discipline; the baseline side of the int8-vs-f32 comparisons.
class F32KvCache {
 public:
  F32KvCache(std::size_t layers, std::size_t seqs, std::size_t kv_heads,
             std::size_t head_size, std::size_t capacity);

  std::size_t append_token(std::size_t layer, std::size_t seq,
                           const Tensor& k_heads, const Tensor& v_heads);

  std::span<const float> key_head(std::size_t layer, std::size_t seq,
                                  std::size_t head, std::size_t upto) const;
  std::span<const float> value_head(std::size_t layer, std::size_t seq,
                                    std::size_t head, std::size_t upto) const;

  std::size_t length(std::size_t seq) const;
  std::size_t capacity() const { return capacity_; }

 private:
  std::span<const float> head_span(const std::vector<float>& data, std::size_t head,
                                   std::size_t upto) const;
  void check_layer_seq(std::size_t layer, std::size_t seq) const;

  std::size_t layers_;
  std::size_t seqs_;
  std::size_t kv_heads_;
  std::size_t head_size_;
  std::size_t capacity_;
  std::vector<std::vector<float>> k_, v_;       // per (layer, seq)
  std::vector<std::vector<std::size_t>> fill_;
};

}  // namespace slim
