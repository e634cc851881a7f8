// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "slim/errors.hpp"
#include "slim/kvcache.hpp"
#include "slim/rng.hpp"
#include "slim/tensor.hpp"

using namespace slim;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed,
                     std::uint64_t stream, float scale = 1.0f) {
  CounterRng rng(seed, stream);
  Tensor t({r, c});
  for (float& v : t.flat()) v = rng.next_signed() * scale;
  return t;
}

KvCacheSpec llama7b_spec() {
  KvCacheSpec s;
  s.batch = 256;
  s.input_len = 1024;
  s.output_len = 1024;
  s.layers = 32;
  s.kv_heads = 32;
  s.head_size = 128;
  s.dtype_bytes = 2;
  return s;
}

}  // namespace

TEST_CASE("cache volume of the unit spec") {
  KvCacheSpec s;  // b=1, in=1, out=0, everything else 1
  s.dtype_bytes = 1;
  CHECK(cache_bytes(s) == 2);
}

TEST_CASE("cache volume of the Llama2-7B example") {
  CHECK(cache_bytes(llama7b_spec()) == 274'877'906'944ull);  // 256 GiB
}

TEST_CASE("cache volume is linear in the dtype width") {
  KvCacheSpec s = llama7b_spec();
  const std::uint64_t fp16 = cache_bytes(s);
  s.dtype_bytes = 1;
  CHECK(cache_bytes(s) * 2 == fp16);
}

TEST_CASE("cache volume overflow is detected") {
  KvCacheSpec s;
  s.batch = 1ull << 40;
  s.input_len = 1ull << 40;
  s.layers = 1ull << 40;
  CHECK_THROWS_AS(cache_bytes(s), OverflowError);
}

TEST_CASE("scale storage of the unit spec") {
  KvCacheSpec s;
  s.dtype_bytes = 1;
  CHECK(cache_bytes_with_scales(s, 4) == 10);  // 2 payload + 8 scales
}

TEST_CASE("scale storage of the Llama2-7B example") {
  const std::uint64_t total = cache_bytes_with_scales(llama7b_spec(), 4);
  CHECK(total == 141'733'920'768ull);  // 128 GiB payload + 4 GiB scales
  const double ratio =
      static_cast<double>(total) / static_cast<double>(cache_bytes(llama7b_spec()));
  CHECK(ratio == 0.515625);
}

TEST_CASE("scale overhead fraction identity") {
  CounterRng rng(5, 0);
  for (int c = 0; c < 20; ++c) {
    KvCacheSpec s;
    s.batch = 1 + rng.next_below(8);
    s.input_len = 1 + rng.next_below(100);
    s.output_len = rng.next_below(100);
    s.layers = 1 + rng.next_below(8);
    s.kv_heads = 1 + rng.next_below(16);
    s.head_size = 1 + rng.next_below(128);
    const std::uint64_t scale_bytes = 1 + rng.next_below(8);
    const double total =
        static_cast<double>(cache_bytes_with_scales(s, scale_bytes));
    KvCacheSpec int8 = s;
    int8.dtype_bytes = 1;
    const double payload = static_cast<double>(cache_bytes(int8));
    const double expected = static_cast<double>(scale_bytes) /
                            static_cast<double>(s.head_size + scale_bytes);
    CHECK((total - payload) / total == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("spec validation") {
  KvCacheSpec s;
  s.batch = 0;
  CHECK_THROWS_AS(cache_bytes(s), ConfigError);
  KvCacheSpec ok;
  ok.output_len = 0;  // prefill-only planning is allowed
  CHECK(cache_bytes(ok) > 0);
  CHECK_THROWS_AS(cache_bytes_with_scales(ok, 0), ConfigError);
}

TEST_CASE("append then read stays within the quantizer bound") {
  Int8KvCache cache(2, 1, 3, 8, 16);
  std::vector<Tensor> appended_k, appended_v;
  for (int tok = 0; tok < 5; ++tok) {
    Tensor k = random_tensor(3, 8, 40 + tok, 0, 2.0f);
    Tensor v = random_tensor(3, 8, 40 + tok, 1, 2.0f);
    appended_k.push_back(k);
    appended_v.push_back(v);
    for (std::size_t layer = 0; layer < 2; ++layer)
      CHECK(cache.append_token(layer, 0, k, v) == static_cast<std::size_t>(tok));
  }
  CHECK(cache.length(0) == 5);

  for (std::size_t head = 0; head < 3; ++head) {
    QuantRowsView kv = cache.key_head(1, 0, head, 5);
    Tensor back = dequantize(kv);
    for (std::size_t tok = 0; tok < 5; ++tok) {
      double absmax = 0.0;
      for (std::size_t j = 0; j < 8; ++j)
        absmax = std::max(absmax,
                          std::fabs(static_cast<double>(appended_k[tok].at(head, j))));
      for (std::size_t j = 0; j < 8; ++j)
        CHECK(std::fabs(back.at(tok, j) - appended_k[tok].at(head, j)) <=
              absmax / 254.0);
    }
  }
}

TEST_CASE("per-head scales keep a quiet head precise next to a loud one") {
  // Head 0 spans [0.005, 0.01]; head 1 spans around 100. One shared scale
  // would crush head 0 to a single quantization step.
  Int8KvCache cache(1, 1, 2, 8, 4);
  Tensor k({2, 8}), v({2, 8});
  CounterRng rng(77, 0);
  for (std::size_t j = 0; j < 8; ++j) {
    k.at(0, j) = 0.005f + 0.005f * rng.next_unit();
    k.at(1, j) = 50.0f + 50.0f * rng.next_unit();
    v.at(0, j) = 0.005f;
    v.at(1, j) = 100.0f;
  }
  cache.append_token(0, 0, k, v);

  QuantRowsView quiet = cache.key_head(0, 0, 0, 1);
  QuantRowsView loud = cache.key_head(0, 0, 1, 1);
  CHECK(loud.scales[0] / quiet.scales[0] >= 1e3f);

  Tensor back = dequantize(quiet);
  for (std::size_t j = 0; j < 8; ++j) {
    const double rel = std::fabs(back.at(0, j) - k.at(0, j)) /
                       std::fabs(static_cast<double>(k.at(0, j)));
    CHECK(rel < 0.01);  // ~4 significant digits survive
  }
}

TEST_CASE("appending to a full cache fails and leaves it unchanged") {
  Int8KvCache cache(1, 1, 2, 4, 2);
  Tensor k = random_tensor(2, 4, 50, 0);
  Tensor v = random_tensor(2, 4, 50, 1);
  cache.append_token(0, 0, k, v);
  cache.append_token(0, 0, k, v);

  QuantRowsView before = cache.key_head(0, 0, 0, 2);
  std::vector<std::int8_t> snapshot(before.values, before.values + 2 * 4);
  CHECK_THROWS_AS(cache.append_token(0, 0, k, v), CapacityError);
  CHECK(cache.length(0) == 2);
  QuantRowsView after = cache.key_head(0, 0, 0, 2);
  CHECK(std::memcmp(snapshot.data(), after.values, snapshot.size()) == 0);
}

TEST_CASE("layer discipline and range errors") {
  Int8KvCache cache(2, 1, 2, 4, 4);
  Tensor k = random_tensor(2, 4, 51, 0);
  Tensor v = random_tensor(2, 4, 51, 1);
  // Layer 1 cannot run ahead of layer 0.
  CHECK_THROWS_AS(cache.append_token(1, 0, k, v), RangeError);
  cache.append_token(0, 0, k, v);
  cache.append_token(1, 0, k, v);
  CHECK_THROWS_AS(cache.append_token(2, 0, k, v), RangeError);
  CHECK_THROWS_AS(cache.append_token(0, 1, k, v), RangeError);
  CHECK_THROWS_AS(cache.key_head(0, 0, 5, 1), RangeError);
  CHECK_THROWS_AS(cache.key_head(0, 0, 0, 2), RangeError);  // beyond length
  CHECK_THROWS_AS(cache.append_token(0, 0, Tensor({3, 4}), Tensor({3, 4})),
                  DimensionError);
}

TEST_CASE("empty view at upto zero") {
  Int8KvCache cache(1, 1, 2, 4, 4);
  QuantRowsView view = cache.key_head(0, 0, 0, 0);
  CHECK(view.rows == 0);
  CHECK(view.cols == 4);
}

TEST_CASE("views snapshot an append-only range") {
  Int8KvCache cache(1, 1, 1, 4, 8);
  Tensor k0 = random_tensor(1, 4, 52, 0);
  Tensor v0 = random_tensor(1, 4, 52, 1);
  cache.append_token(0, 0, k0, v0);

  QuantRowsView view = cache.value_head(0, 0, 0, 1);
  std::vector<std::int8_t> vals(view.values, view.values + 4);
  std::vector<float> scales(view.scales, view.scales + 1);

  for (int tok = 1; tok < 8; ++tok)
    cache.append_token(0, 0, random_tensor(1, 4, 52, 2 * tok),
                       random_tensor(1, 4, 52, 2 * tok + 1));

  CHECK(std::memcmp(vals.data(), view.values, 4) == 0);
  CHECK(scales[0] == view.scales[0]);
}

TEST_CASE("f32 cache stores rows verbatim") {
  F32KvCache cache(2, 1, 2, 4, 4);
  Tensor k = random_tensor(2, 4, 53, 0);
  Tensor v = random_tensor(2, 4, 53, 1);
  for (std::size_t layer = 0; layer < 2; ++layer)
    cache.append_token(layer, 0, k, v);
  std::span<const float> head1 = cache.key_head(0, 0, 1, 1);
  for (std::size_t j = 0; j < 4; ++j) CHECK(head1[j] == k.at(1, j));
  std::span<const float> vals = cache.value_head(1, 0, 0, 1);
  for (std::size_t j = 0; j < 4; ++j) CHECK(vals[j] == v.at(0, j));
  CHECK_THROWS_AS(cache.key_head(0, 0, 0, 3), RangeError);
  CHECK(cache.length(0) == 1);
}
