// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slim/kvcache.hpp"
#include "slim/model.hpp"
#include "slim/tensor.hpp"
#include "slim/topk.hpp"

namespace slim {

struct Range {
  std::size_t lo = 0;
  std::size_t hi = 0;
  std::size_t size() const { return hi - lo; }
  bool contains(std::size_t v) const { return v >= lo && v < hi; }
};

// Assignment of attention heads, vocabulary and ffn columns to workers.
// Head ranges also fix the reduction blocks: residual reductions always run
// over n_head blocks regardless of worker count, so the summed result is
// bit-identical for every sharding of the same model.
struct ShardPlan {
  std::size_t n_workers = 1;
  std::vector<Range> head_ranges;
  std::vector<Range> kv_head_ranges;
  std::vector<Range> vocab_ranges;
  std::vector<Range> ffn_ranges;

  // Even split; throws ConfigError naming the violated constraint when the
  // worker count does not divide the head counts.
  static ShardPlan even(const ModelConfig& config, std::size_t n_workers);

  void validate(const ModelConfig& config) const;
};

enum class Collective {
  kTokenBroadcast,
  kEmbeddingBroadcast,
  kBlockReduce,
  kLogitAllreduce,
  kTopkGather,
};
const char* collective_name(Collective c);

// In-process message fabric with exact accounting. Byte model: directional
// sends are charged to the sender, per link. A broadcast charges the root
// (n-1) payloads; reductions charge every non-root worker its contribution
// and the root the (n-1) result payloads it returns. copy_count counts
// explicit copies between compute output and communication staging, nothing
// else.
class Transport {
 public:
  explicit Transport(std::size_t n_workers);

  std::size_t n_workers() const { return n_workers_; }
  void close();
  bool closed() const { return closed_; }

  void begin_step(std::uint64_t step_index);
  std::uint64_t step_index() const { return step_; }

  // --- collectives ---
  std::int32_t broadcast_token(std::size_t root, std::int32_t token);
  std::vector<float> broadcast_row(std::size_t root, std::span<const float> row);

  // Element-wise sum of one tensor per worker, accumulated in ascending
  // worker order; result replicated. Shape disagreement -> ProtocolError.
  Tensor allreduce_sum(std::span<const Tensor> contributions,
                       Collective label = Collective::kLogitAllreduce);

  // --- staging slots (zero-copy contract) ---
  // A worker's writable region for one reduction. Registering a slot that is
  // still in flight throws ContentionError.
  std::span<float> register_output_buffer(std::size_t worker, std::size_t slot,
                                          std::size_t n_floats);
  // Staging-copy mode: register, then memcpy compute output into the slot.
  // Increments the worker's copy_count.
  void stage_copy(std::size_t worker, std::size_t slot, std::span<const float> src);

  // Fixed-granularity reduction over the registered slots: n_blocks blocks of
  // block_elems floats, worker w holding global blocks worker_blocks[w].
  // Blocks are summed in ascending global block order.
  Tensor reduce_slot_blocks(std::size_t slot, std::size_t n_blocks,
                            std::size_t block_elems,
                            std::span<const Range> worker_blocks);

  // Accounting for the top-k gather (k entries of 8 bytes per non-root
  // worker); the entry lists themselves are handed to merge_topk in process.
  void account_topk_gather(std::size_t root, std::span<const std::size_t> list_sizes);

  void add_copy(std::size_t worker);

  // --- per-step counters ---
  std::uint64_t step_bytes(std::size_t worker, Collective c) const;
  std::uint64_t step_bytes_total(std::size_t worker) const;
  std::uint64_t step_copies(std::size_t worker) const;

  struct MetricRow {
    std::uint64_t step;
    std::size_t worker;
    Collective collective;
    std::uint64_t bytes;
    std::uint64_t copy_count;
  };
  // Rows for the current step, deterministic (worker, collective) order.
  std::vector<MetricRow> step_metrics() const;

  // CSV serialization of metric rows: "step,worker,collective,bytes,copy_count".
  static std::string metrics_csv_header();
  static std::string metrics_csv_row(const MetricRow& row);

 private:
  struct Slot {
    std::vector<float> data;
    bool in_flight = false;
  };

  void check_open() const;
  void check_worker(std::size_t w) const;
  void add_bytes(std::size_t worker, Collective c, std::uint64_t bytes);

  std::size_t n_workers_;
  bool closed_ = false;
  std::uint64_t step_ = 0;
  std::vector<std::array<std::uint64_t, 5>> step_bytes_;  // [worker][collective]
  std::vector<std::uint64_t> step_copies_;
  std::map<std::pair<std::size_t, std::size_t>, Slot> slots_;  // (worker, slot)
  mutable std::mutex mu_;
};

// The k best entries of a worker's logit shard, token ids made global with
// vocab_offset; ordered (logit desc, token asc).
std::vector<TopKEntry> local_topk(const Tensor& logits_shard, std::size_t k,
                                  std::size_t vocab_offset);

// Exact global top-k from disjoint per-shard lists. Overlapping vocab ranges
// or entries outside their shard -> ProtocolError.
std::vector<TopKEntry> merge_topk(std::span<const std::vector<TopKEntry>> lists,
                                  std::span<const Range> vocab_ranges,
                                  std::size_t k);

// Baseline toggles; all-off is the optimized path. Outputs are bit-identical
// across modes, only the transport counters move.
struct DistributedModes {
  bool embedding_broadcast = false;  // ship the embedding row, not the id
  bool full_logit_allreduce = false; // reduce all logits, not per-shard top-k
  bool staging_copies = false;       // copy into staging instead of zero-copy
};

// Tensor-parallel decode over in-process workers driven in lockstep; every
// collective is a synchronization point. Workers build identical weights from
// (config, seed) and keep only their shard plus the replicated pieces.
class DistributedDecoder {
 public:
  DistributedDecoder(const ModelConfig& config, std::uint64_t weight_seed,
                     std::size_t n_workers, Transport& transport,
                     DistributedModes modes = {});

  // One decode step: broadcast the token, run every worker's shard, reduce,
  // sample at the root, broadcast the choice. Returns the sampled token.
  std::int32_t step(std::int32_t token, const SamplerConfig& sampler,
                    std::uint64_t step_index);

  std::size_t pos() const { return pos_; }
  const ShardPlan& plan() const { return plan_; }

  // Root-side full logits of the last step (full_logit_allreduce mode only).
  const Tensor& last_root_logits() const;
  const std::vector<TopKEntry>& last_merged() const { return merged_; }

 private:
  struct Worker {
    // replicated
    Tensor embedding;
    std::vector<float> final_norm;
    // sharded, per layer
    struct Layer {
      Tensor wq, wk, wv;               // column shards
      std::vector<Tensor> wo_blocks;   // per owned head, [head_size x d_model]
      Tensor w_gate, w_up;             // column shards
      std::vector<Tensor> wdown_blocks;  // per owned head-block of ffn rows
      std::vector<float> attn_norm, ffn_norm;
    };
    std::vector<Layer> layers;
    std::unique_ptr<F32KvCache> cache;
    Tensor x;  // residual stream, replicated value
  };

  void check_replicas(std::size_t layer_tag) const;
  std::span<float> reduction_dst(std::size_t worker, std::size_t slot,
                                 std::size_t n_floats, Tensor& scratch);
  void finish_reduction(std::size_t worker, std::size_t slot, const Tensor& scratch);

  ModelConfig config_;
  ShardPlan plan_;
  Transport& transport_;
  DistributedModes modes_;
  std::vector<Worker> workers_;
  std::size_t pos_ = 0;
  Tensor root_logits_;
  std::vector<TopKEntry> merged_;
  bool has_root_logits_ = false;
};

// Feed the prompt teacher-forced through the decode path, then sample n_out
// tokens. The same helper drives every worker count, so streams are directly
// comparable.
std::vector<std::int32_t> distributed_generate(
    const ModelConfig& config, std::uint64_t weight_seed, std::size_t n_workers,
    Transport& transport, std::span<const std::int32_t> prompt, std::size_t n_out,
    const SamplerConfig& sampler, DistributedModes modes = {});

}  // namespace slim
