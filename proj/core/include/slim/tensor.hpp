// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace slim {

// Dense row-major f32 tensor. Rank is usually 2; rank 3 appears only as
// (seq, head, dim) staging in the model.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::initializer_list<std::size_t> shape)
      : Tensor(std::vector<std::size_t>(shape)) {}

  // 2-D tensor from nested values, e.g. Tensor::from({{1, 2}, {3, 4}}).
  static Tensor from(std::initializer_list<std::initializer_list<float>> rows);
  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }
  static Tensor identity(std::size_t n);

  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }

  // 2-D accessors; rows()/cols() require rank 2.
  std::size_t rows() const;
  std::size_t cols() const;
  float& at(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  float at(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }
  std::span<float> row(std::size_t i) { return {data_.data() + i * cols(), cols()}; }
  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * cols(), cols()};
  }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> flat() { return {data_.data(), data_.size()}; }
  std::span<const float> flat() const { return {data_.data(), data_.size()}; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

std::string shape_str(std::span<const std::size_t> shape);

// Non-owning view of INT8 rows with one f32 scale per row.
struct QuantRowsView {
  std::size_t rows = 0;
  std::size_t cols = 0;
  const std::int8_t* values = nullptr;
  const float* scales = nullptr;

  std::span<const std::int8_t> row(std::size_t i) const {
    return {values + i * cols, cols};
  }
};

// INT8 payload plus one f32 scale per row group. Dequantized value is
// values[i][j] * scales[i]; scale is absmax(row)/127 (1.0 for all-zero rows).
struct QuantRowsI8 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> values;
  std::vector<float> scales;

  QuantRowsView view() const { return {rows, cols, values.data(), scales.data()}; }
  operator QuantRowsView() const { return view(); }
};

// c[i][j] = sum_t a[i][t] * b[t][j], accumulated in f32 over ascending t.
// With transpose_b, b is [n x k] and c = a * b^T. The ascending-t f32
// accumulation order is part of the contract: results are bit-identical to a
// scalar triple loop.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

// matmul writing into caller storage (out.size() == m * n). Same arithmetic.
void matmul_into(std::span<float> out, const Tensor& a, const Tensor& b,
                 bool transpose_b = false);

// Row-wise softmax with max subtraction. Rows sum to 1 within 1e-6.
Tensor softmax_rows(const Tensor& x);

// In-place softmax of one contiguous row.
void softmax_row_inplace(std::span<float> row);

// Symmetric per-row INT8 quantization: scale = absmax/127, values =
// round_to_nearest(x/scale) clamped to [-127, 127]. All-zero rows store
// exact zeros with scale 1.0.
QuantRowsI8 quantize_rows_i8(const Tensor& x);

Tensor dequantize(const QuantRowsView& q);

// out[i][j] = q.scales[j] * sum_t a[i][t] * q.values[j][t]; the INT8 operand
// is used transposed and each value is converted to f32 inside the kernel.
// The row scale multiplies the accumulator once per output element, after
// the ascending-t accumulation.
Tensor matmul_hybrid(const Tensor& a, const QuantRowsView& q);

// Same kernel for the untransposed orientation: out = a * dequant(q), i.e.
// out[i][j] = sum_t (a[i][t] * q.scales[t]) * q.values[t][j]. The scales ride
// the contraction axis here, so they fold into the float operand instead.
Tensor matmul_hybrid_rows(const Tensor& a, const QuantRowsView& q);

}  // namespace slim
