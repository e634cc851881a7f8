// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "slim/attention.hpp"
#include "slim/rng.hpp"
#include "slim/tensor.hpp"

namespace {

slim::Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t stream) {
  slim::CounterRng rng(42, stream);
  slim::Tensor t({r, c});
  for (float& v : t.flat()) v = rng.next_signed();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const std::size_t n = state.range(0);
  slim::Tensor a = random_tensor(n, n, 0);
  slim::Tensor b = random_tensor(n, n, 1);
  for (auto _ : state) {
    slim::Tensor c = slim::matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_MatmulHybridGemv(benchmark::State& state) {
  const std::size_t rows = state.range(0);
  slim::Tensor a = random_tensor(1, 128, 0);
  slim::QuantRowsI8 q = slim::quantize_rows_i8(random_tensor(rows, 128, 1));
  for (auto _ : state) {
    slim::Tensor c = slim::matmul_hybrid(a, q.view());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * rows * 128);
}
BENCHMARK(BM_MatmulHybridGemv)->Arg(256)->Arg(1024)->Arg(4096);

void BM_QuantizeRows(benchmark::State& state) {
  slim::Tensor x = random_tensor(state.range(0), 128, 0);
  for (auto _ : state) {
    slim::QuantRowsI8 q = slim::quantize_rows_i8(x);
    benchmark::DoNotOptimize(q.values.data());
  }
  state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_QuantizeRows)->Arg(32)->Arg(512);

slim::AttentionParams bench_params(std::size_t d) {
  slim::AttentionParams p;
  p.head_size = d;
  p.causal = true;
  p.slim_block_rows = 8;
  p.flash_tile_q = 8;
  p.flash_tile_k = 8;
  return p;
}

void BM_AttentionNaive(benchmark::State& state) {
  const std::size_t len = state.range(0), d = 64;
  slim::Tensor q = random_tensor(len, d, 0);
  slim::Tensor k = random_tensor(len, d, 1);
  slim::Tensor v = random_tensor(len, d, 2);
  const slim::AttentionParams p = bench_params(d);
  for (auto _ : state) {
    slim::Tensor out = slim::attention_naive(q, k, v, p);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_AttentionNaive)->Arg(256)->Arg(1024);

void BM_AttentionSlim(benchmark::State& state) {
  const std::size_t len = state.range(0), d = 64;
  slim::Tensor q = random_tensor(len, d, 0);
  slim::Tensor k = random_tensor(len, d, 1);
  slim::Tensor v = random_tensor(len, d, 2);
  const slim::AttentionParams p = bench_params(d);
  slim::ScoreBuffer buf(p.slim_block_rows, len);
  for (auto _ : state) {
    slim::Tensor out = slim::attention_slim(q, k, v, p, buf);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_AttentionSlim)->Arg(256)->Arg(1024)->Arg(2048);

void BM_AttentionFlash(benchmark::State& state) {
  const std::size_t len = state.range(0), d = 64;
  slim::Tensor q = random_tensor(len, d, 0);
  slim::Tensor k = random_tensor(len, d, 1);
  slim::Tensor v = random_tensor(len, d, 2);
  const slim::AttentionParams p = bench_params(d);
  for (auto _ : state) {
    slim::Tensor out = slim::attention_flash(q, k, v, p);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_AttentionFlash)->Arg(256)->Arg(1024)->Arg(2048);

void BM_DecodeInt8(benchmark::State& state) {
  const std::size_t t = state.range(0), d = 64;
  slim::Tensor q = random_tensor(1, d, 0);
  slim::QuantRowsI8 ck = slim::quantize_rows_i8(random_tensor(t, d, 1));
  slim::QuantRowsI8 cv = slim::quantize_rows_i8(random_tensor(t, d, 2));
  slim::AttentionParams p;
  p.head_size = d;
  for (auto _ : state) {
    slim::Tensor out = slim::attention_decode(q, ck.view(), cv.view(), p, t);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_DecodeInt8)->Arg(512)->Arg(2048);

}  // namespace

BENCHMARK_MAIN();
