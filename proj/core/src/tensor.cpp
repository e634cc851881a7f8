// SPDX-License-Identifier: Apache-2.0
#include "slim/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "slim/errors.hpp"

namespace slim {

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (std::size_t d : shape_) n *= d;
  data_.assign(n, 0.0f);
}

Tensor Tensor::from(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Tensor t({r, c});
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c)
      throw DimensionError("ragged initializer: row " + std::to_string(i));
    std::copy(row.begin(), row.end(), t.data() + i * c);
    ++i;
  }
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on tensor of shape " + shape_str());
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on tensor of shape " + shape_str());
  return shape_[1];
}

std::string Tensor::shape_str() const { return slim::shape_str(shape_); }

bool Tensor::all_finite() const {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string shape_str(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void check_rank2(const Tensor& t, const char* name) {
  if (t.rank() != 2)
    throw DimensionError(std::string(name) + " must be rank 2, got " + t.shape_str());
}

}  // namespace

void matmul_into(std::span<float> out, const Tensor& a, const Tensor& b,
                 bool transpose_b) {
  check_rank2(a, "matmul lhs");
  check_rank2(b, "matmul rhs");
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t bk = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (k != bk)
    throw DimensionError("matmul inner dimensions disagree: " + a.shape_str() +
                         " vs " + b.shape_str() +
                         (transpose_b ? " (rhs transposed)" : ""));
  if (out.size() != m * n)
    throw DimensionError("matmul output size " + std::to_string(out.size()) +
                         " does not hold " + std::to_string(m) + "x" +
                         std::to_string(n));

  const float* ap = a.data();
  const float* bp = b.data();
  if (transpose_b) {
    // Rows of both operands are contiguous: plain dot products.
    for (std::size_t i = 0; i < m; ++i) {
      const float* arow = ap + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const float* brow = bp + j * k;
        float acc = 0.0f;
        for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
        out[i * n + j] = acc;
      }
    }
  } else {
    // i-t-j order is cache friendly and accumulates each c[i][j] over
    // ascending t, exactly like the scalar triple loop.
    for (std::size_t i = 0; i < m; ++i) {
      float* orow = out.data() + i * n;
      std::fill(orow, orow + n, 0.0f);
      const float* arow = ap + i * k;
      for (std::size_t t = 0; t < k; ++t) {
        const float av = arow[t];
        const float* brow = bp + t * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  check_rank2(a, "matmul lhs");
  check_rank2(b, "matmul rhs");
  const std::size_t m = a.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  Tensor c({m, n});
  matmul_into(c.flat(), a, b, transpose_b);
  return c;
}

void softmax_row_inplace(std::span<float> row) {
  if (row.empty()) throw DimensionError("softmax over empty row");
  float mx = row[0];
  for (float v : row) mx = std::max(mx, v);
  float sum = 0.0f;
  for (float& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  const float inv = 1.0f / sum;
  for (float& v : row) v *= inv;
}

Tensor softmax_rows(const Tensor& x) {
  check_rank2(x, "softmax input");
  if (x.cols() == 0 || x.rows() == 0)
    throw DimensionError("softmax over empty tensor " + x.shape_str());
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_row_inplace(out.row(i));
  return out;
}

QuantRowsI8 quantize_rows_i8(const Tensor& x) {
  check_rank2(x, "quantize input");
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  if (r == 0 || c == 0)
    throw DimensionError("quantize over empty tensor " + x.shape_str());
  QuantRowsI8 q;
  q.rows = r;
  q.cols = c;
  q.values.resize(r * c);
  q.scales.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    const float* src = x.data() + i * c;
    float absmax = 0.0f;
    for (std::size_t j = 0; j < c; ++j) absmax = std::max(absmax, std::fabs(src[j]));
    if (absmax == 0.0f) {
      // Degenerate-row convention: exact zeros, scale 1.0.
      q.scales[i] = 1.0f;
      std::fill(q.values.begin() + i * c, q.values.begin() + (i + 1) * c,
                std::int8_t{0});
      continue;
    }
    const float scale = absmax / 127.0f;
    q.scales[i] = scale;
    for (std::size_t j = 0; j < c; ++j) {
      long v = std::lround(static_cast<double>(src[j]) / static_cast<double>(scale));
      v = std::clamp(v, -127l, 127l);
      q.values[i * c + j] = static_cast<std::int8_t>(v);
    }
  }
  return q;
}

Tensor dequantize(const QuantRowsView& q) {
  Tensor out({q.rows, q.cols});
  for (std::size_t i = 0; i < q.rows; ++i) {
    const float s = q.scales[i];
    const std::int8_t* src = q.values + i * q.cols;
    float* dst = out.data() + i * q.cols;
    for (std::size_t j = 0; j < q.cols; ++j)
      dst[j] = static_cast<float>(src[j]) * s;
  }
  return out;
}

Tensor matmul_hybrid(const Tensor& a, const QuantRowsView& q) {
  check_rank2(a, "matmul_hybrid lhs");
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  if (k != q.cols)
    throw DimensionError(
        "matmul_hybrid inner dimensions disagree: " + a.shape_str() + " vs i8[" +
        std::to_string(q.rows) + "x" + std::to_string(q.cols) + "] (transposed)");
  Tensor out({m, q.rows});
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a.data() + i * k;
    float* orow = out.data() + i * q.rows;
    for (std::size_t j = 0; j < q.rows; ++j) {
      const std::int8_t* qrow = q.values + j * k;
      float acc = 0.0f;
      for (std::size_t t = 0; t < k; ++t)
        acc += arow[t] * static_cast<float>(qrow[t]);
      orow[j] = q.scales[j] * acc;
    }
  }
  return out;
}

Tensor matmul_hybrid_rows(const Tensor& a, const QuantRowsView& q) {
  check_rank2(a, "matmul_hybrid_rows lhs");
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  if (k != q.rows)
    throw DimensionError("matmul_hybrid_rows inner dimensions disagree: " +
                         a.shape_str() + " vs i8[" + std::to_string(q.rows) + "x" +
                         std::to_string(q.cols) + "]");
  const std::size_t n = q.cols;
  Tensor out({m, n});
  std::vector<float> scaled(k);
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a.data() + i * k;
    for (std::size_t t = 0; t < k; ++t) scaled[t] = arow[t] * q.scales[t];
    float* orow = out.data() + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const float av = scaled[t];
      const std::int8_t* qrow = q.values + t * n;
      for (std::size_t j = 0; j < n; ++j)
        orow[j] += av * static_cast<float>(qrow[j]);
    }
  }
  return out;
}

}  // namespace slim
