// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "slim/attention.hpp"
#include "slim/distributed.hpp"
#include "slim/kvcache.hpp"
#include "slim/model.hpp"
#include "slim/report.hpp"

namespace slim {

// A kernel failed its pre-timing correctness gate; no report is emitted.
struct VerificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AttentionBenchOptions {
  std::vector<std::size_t> lengths = {256, 512, 1024, 2048};
  std::vector<AttentionKernel> kernels = {AttentionKernel::kNaive,
                                          AttentionKernel::kSlim,
                                          AttentionKernel::kFlash};
  std::size_t head_size = 64;
  std::size_t slim_block_rows = 8;
  std::size_t flash_tile_q = 8;
  std::size_t flash_tile_k = 8;
  std::size_t reps = 10;
  std::size_t warmup = 3;
  std::uint64_t seed = 0;
};

// Per input length: cross-check slim/flash against naive (aborting the run on
// a tolerance miss), then time each requested kernel. Timing rows report the
// median over reps; scratch sizes are recorded alongside.
BenchReport bench_attention(const AttentionBenchOptions& opt);

struct ThroughputBenchOptions {
  std::vector<std::size_t> batches = {8, 16};
  std::size_t input_len = 16;
  std::size_t output_len = 32;
  CacheDtype cache_dtype = CacheDtype::kInt8;
  std::uint64_t seed = 0;
  ModelConfig model;  // toy default
};

// Tokens per second over the decode phase only (the prefill-produced first
// token is excluded). Batch entries run as independent sequences sharing one
// weight set.
BenchReport bench_throughput(const ThroughputBenchOptions& opt);

struct DistributedBenchOptions {
  std::vector<std::size_t> worker_counts = {1, 2};
  std::size_t steps = 16;
  std::size_t k = 8;
  std::uint64_t seed = 0;
  ModelConfig model = distributed_toy_config();
  // When set, receives the optimized-path per-step transport metric rows.
  std::vector<Transport::MetricRow>* step_metrics = nullptr;

  static ModelConfig distributed_toy_config();
};

// Greedy-stream equivalence against one worker gates the report; then per
// worker count: mean step latency, per-collective bytes for the optimized
// path and the broadcast/reduction baselines, and copy counts for the
// zero-copy and staging modes.
BenchReport bench_distributed(const DistributedBenchOptions& opt);

// Cache planning table: payload at the requested dtype width, INT8 payload,
// INT8 plus per-(token, head) scales, and the size ratio.
BenchReport kv_plan(const KvCacheSpec& spec, std::uint64_t scale_bytes = 4);

}  // namespace slim
