// SPDX-License-Identifier: Apache-2.0
#include "slim/kvcache.hpp"

#include <algorithm>
#include <string>

#include "slim/errors.hpp"

namespace slim {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const char* what) {
  std::uint64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r))
    throw OverflowError(std::string("cache size overflows 64 bits at ") + what);
  return r;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b, const char* what) {
  std::uint64_t r = 0;
  if (__builtin_add_overflow(a, b, &r))
    throw OverflowError(std::string("cache size overflows 64 bits at ") + what);
  return r;
}

// 2 * b * (L_i + L_o) * layers * kv_heads, the dtype-independent row count.
std::uint64_t slice_count(const KvCacheSpec& spec) {
  std::uint64_t tokens = checked_add(spec.input_len, spec.output_len, "sequence length");
  std::uint64_t n = checked_mul(2, spec.batch, "batch");
  n = checked_mul(n, tokens, "tokens");
  n = checked_mul(n, spec.layers, "layers");
  return checked_mul(n, spec.kv_heads, "kv_heads");
}

}  // namespace

void KvCacheSpec::validate() const {
  // output_len may be 0 (prefill-only planning); everything else is >= 1.
  if (batch == 0 || input_len == 0 || layers == 0 || kv_heads == 0 ||
      head_size == 0 || dtype_bytes == 0)
    throw ConfigError("cache spec fields must be >= 1 (output_len may be 0)");
}

std::uint64_t cache_bytes(const KvCacheSpec& spec) {
  spec.validate();
  std::uint64_t n = slice_count(spec);
  n = checked_mul(n, spec.head_size, "head_size");
  return checked_mul(n, spec.dtype_bytes, "dtype_bytes");
}

std::uint64_t cache_bytes_with_scales(const KvCacheSpec& spec,
                                      std::uint64_t scale_bytes) {
  spec.validate();
  if (scale_bytes == 0) throw ConfigError("scale_bytes must be >= 1");
  KvCacheSpec int8 = spec;
  int8.dtype_bytes = 1;
  std::uint64_t payload = cache_bytes(int8);
  std::uint64_t scales = checked_mul(slice_count(spec), scale_bytes, "scales");
  return checked_add(payload, scales, "payload+scales");
}

Int8KvCache::Int8KvCache(std::size_t layers, std::size_t seqs, std::size_t kv_heads,
                         std::size_t head_size, std::size_t capacity)
    : layers_(layers), seqs_(seqs), kv_heads_(kv_heads), head_size_(head_size),
      capacity_(capacity) {
  if (layers == 0 || seqs == 0 || kv_heads == 0 || head_size == 0 || capacity == 0)
    throw ConfigError("cache dimensions must be >= 1");
  stores_.resize(layers * seqs * 2);
  for (Store& s : stores_) {
    s.values.assign(kv_heads * capacity * head_size, 0);
    s.scales.assign(kv_heads * capacity, 0.0f);
  }
  fill_.assign(layers, std::vector<std::size_t>(seqs, 0));
}

void Int8KvCache::check_layer_seq(std::size_t layer, std::size_t seq) const {
  if (layer >= layers_)
    throw RangeError("layer " + std::to_string(layer) + " out of range (" +
                     std::to_string(layers_) + " layers)");
  if (seq >= seqs_)
    throw RangeError("sequence " + std::to_string(seq) + " out of range (" +
                     std::to_string(seqs_) + " sequences)");
}

const Int8KvCache::Store& Int8KvCache::store(std::size_t layer, std::size_t seq,
                                             bool value_side) const {
  return stores_[(layer * seqs_ + seq) * 2 + (value_side ? 1 : 0)];
}

Int8KvCache::Store& Int8KvCache::store(std::size_t layer, std::size_t seq,
                                       bool value_side) {
  return stores_[(layer * seqs_ + seq) * 2 + (value_side ? 1 : 0)];
}

std::size_t Int8KvCache::append_token(std::size_t layer, std::size_t seq,
                                      const Tensor& k_heads, const Tensor& v_heads) {
  check_layer_seq(layer, seq);
  if (k_heads.rank() != 2 || k_heads.rows() != kv_heads_ ||
      k_heads.cols() != head_size_ || !k_heads.same_shape(v_heads))
    throw DimensionError("append expects [kv_heads x head_size] slices, got " +
                         k_heads.shape_str() + " and " + v_heads.shape_str());
  const std::size_t pos = fill_[layer][seq];
  if (pos >= capacity_)
    throw CapacityError("cache full: capacity " + std::to_string(capacity_) +
                        " tokens");
  if (layer > 0 && pos >= fill_[0][seq])
    throw RangeError("layer " + std::to_string(layer) +
                     " appended ahead of layer 0");

  // One quantization row per head: exactly one scale per (token, head).
  const QuantRowsI8 qk = quantize_rows_i8(k_heads);
  const QuantRowsI8 qv = quantize_rows_i8(v_heads);
  for (int side = 0; side < 2; ++side) {
    const QuantRowsI8& q = side ? qv : qk;
    Store& s = store(layer, seq, side != 0);
    for (std::size_t h = 0; h < kv_heads_; ++h) {
      const std::size_t row = h * capacity_ + pos;
      std::copy_n(q.values.data() + h * head_size_, head_size_,
                  s.values.data() + row * head_size_);
      s.scales[row] = q.scales[h];
    }
  }
  fill_[layer][seq] = pos + 1;
  return pos;
}

QuantRowsView Int8KvCache::head_view(const Store& s, std::size_t head,
                                     std::size_t upto) const {
  const std::size_t base = head * capacity_;
  return {upto, head_size_, s.values.data() + base * head_size_,
          s.scales.data() + base};
}

QuantRowsView Int8KvCache::key_head(std::size_t layer, std::size_t seq,
                                    std::size_t head, std::size_t upto) const {
  check_layer_seq(layer, seq);
  if (head >= kv_heads_)
    throw RangeError("head " + std::to_string(head) + " out of range");
  if (upto > fill_[layer][seq])
    throw RangeError("read of " + std::to_string(upto) + " tokens but only " +
                     std::to_string(fill_[layer][seq]) + " appended");
  return head_view(store(layer, seq, false), head, upto);
}

QuantRowsView Int8KvCache::value_head(std::size_t layer, std::size_t seq,
                                      std::size_t head, std::size_t upto) const {
  check_layer_seq(layer, seq);
  if (head >= kv_heads_)
    throw RangeError("head " + std::to_string(head) + " out of range");
  if (upto > fill_[layer][seq])
    throw RangeError("read of " + std::to_string(upto) + " tokens but only " +
                     std::to_string(fill_[layer][seq]) + " appended");
  return head_view(store(layer, seq, true), head, upto);
}

std::size_t Int8KvCache::length(std::size_t seq) const {
  if (seq >= seqs_) throw RangeError("sequence out of range");
  return fill_[0][seq];
}

F32KvCache::F32KvCache(std::size_t layers, std::size_t seqs, std::size_t kv_heads,
                       std::size_t head_size, std::size_t capacity)
    : layers_(layers), seqs_(seqs), kv_heads_(kv_heads), head_size_(head_size),
      capacity_(capacity) {
  if (layers == 0 || seqs == 0 || kv_heads == 0 || head_size == 0 || capacity == 0)
    throw ConfigError("cache dimensions must be >= 1");
  k_.assign(layers * seqs, std::vector<float>(kv_heads * capacity * head_size, 0.0f));
  v_ = k_;
  fill_.assign(layers, std::vector<std::size_t>(seqs, 0));
}

void F32KvCache::check_layer_seq(std::size_t layer, std::size_t seq) const {
  if (layer >= layers_)
    throw RangeError("layer " + std::to_string(layer) + " out of range (" +
                     std::to_string(layers_) + " layers)");
  if (seq >= seqs_)
    throw RangeError("sequence " + std::to_string(seq) + " out of range (" +
                     std::to_string(seqs_) + " sequences)");
}

std::size_t F32KvCache::append_token(std::size_t layer, std::size_t seq,
                                     const Tensor& k_heads, const Tensor& v_heads) {
  check_layer_seq(layer, seq);
  if (k_heads.rank() != 2 || k_heads.rows() != kv_heads_ ||
      k_heads.cols() != head_size_ || !k_heads.same_shape(v_heads))
    throw DimensionError("append expects [kv_heads x head_size] slices, got " +
                         k_heads.shape_str() + " and " + v_heads.shape_str());
  const std::size_t pos = fill_[layer][seq];
  if (pos >= capacity_)
    throw CapacityError("cache full: capacity " + std::to_string(capacity_) +
                        " tokens");
  if (layer > 0 && pos >= fill_[0][seq])
    throw RangeError("layer " + std::to_string(layer) +
                     " appended ahead of layer 0");
  std::vector<float>& kd = k_[layer * seqs_ + seq];
  std::vector<float>& vd = v_[layer * seqs_ + seq];
  for (std::size_t h = 0; h < kv_heads_; ++h) {
    const std::size_t row = h * capacity_ + pos;
    std::copy_n(k_heads.data() + h * head_size_, head_size_,
                kd.data() + row * head_size_);
    std::copy_n(v_heads.data() + h * head_size_, head_size_,
                vd.data() + row * head_size_);
  }
  fill_[layer][seq] = pos + 1;
  return pos;
}

std::span<const float> F32KvCache::head_span(const std::vector<float>& data,
                                             std::size_t head, std::size_t upto) const {
  return {data.data() + head * capacity_ * head_size_, upto * head_size_};
}

std::span<const float> F32KvCache::key_head(std::size_t layer, std::size_t seq,
                                            std::size_t head, std::size_t upto) const {
  check_layer_seq(layer, seq);
  if (head >= kv_heads_)
    throw RangeError("head " + std::to_string(head) + " out of range");
  if (upto > fill_[layer][seq])
    throw RangeError("read of " + std::to_string(upto) + " tokens but only " +
                     std::to_string(fill_[layer][seq]) + " appended");
  return head_span(k_[layer * seqs_ + seq], head, upto);
}

std::span<const float> F32KvCache::value_head(std::size_t layer, std::size_t seq,
                                              std::size_t head, std::size_t upto) const {
  check_layer_seq(layer, seq);
  if (head >= kv_heads_)
    throw RangeError("head " + std::to_string(head) + " out of range");
  if (upto > fill_[layer][seq])
    throw RangeError("read of " + std::to_string(upto) + " tokens but only " +
                     std::to_string(fill_[layer][seq]) + " appended");
  return head_span(v_[layer * seqs_ + seq], head, upto);
}

std::size_t F32KvCache::length(std::size_t seq) const {
  if (seq >= seqs_) throw RangeError("sequence out of range");
  return fill_[0][seq];
}

}  // namespace slim
