// SPDX-License-Identifier: Apache-2.0
#include "slim/distributed.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "slim/attention.hpp"
#include "slim/errors.hpp"

namespace slim {

namespace {

constexpr std::size_t kRoot = 0;
constexpr std::uint64_t kTokenWireBytes = 4;   // token ids travel as u32
constexpr std::uint64_t kTopkEntryWireBytes = 8;  // u32 id + f32 logit

Tensor slice_cols(const Tensor& t, std::size_t lo, std::size_t hi) {
  Tensor out({t.rows(), hi - lo});
  for (std::size_t i = 0; i < t.rows(); ++i)
    std::copy_n(t.data() + i * t.cols() + lo, hi - lo, out.data() + i * (hi - lo));
  return out;
}

Tensor slice_rows(const Tensor& t, std::size_t lo, std::size_t hi) {
  Tensor out({hi - lo, t.cols()});
  std::copy_n(t.data() + lo * t.cols(), (hi - lo) * t.cols(), out.data());
  return out;
}

}  // namespace

ShardPlan ShardPlan::even(const ModelConfig& config, std::size_t n_workers) {
  config.validate();
  if (n_workers == 0) throw ConfigError("worker count must be >= 1");
  if (config.n_head % n_workers != 0)
    throw ConfigError("worker count " + std::to_string(n_workers) +
                      " does not divide head count " + std::to_string(config.n_head));
  if (config.n_kv_head % n_workers != 0)
    throw ConfigError("worker count " + std::to_string(n_workers) +
                      " splits a GQA group: per-worker head count must be a "
                      "multiple of " +
                      std::to_string(config.n_head / config.n_kv_head));
  ShardPlan plan;
  plan.n_workers = n_workers;
  const std::size_t heads_w = config.n_head / n_workers;
  const std::size_t kv_w = config.n_kv_head / n_workers;
  const std::size_t ffn_block = config.ffn_dim / config.n_head;
  for (std::size_t w = 0; w < n_workers; ++w) {
    plan.head_ranges.push_back({w * heads_w, (w + 1) * heads_w});
    plan.kv_head_ranges.push_back({w * kv_w, (w + 1) * kv_w});
    plan.ffn_ranges.push_back(
        {w * heads_w * ffn_block, (w + 1) * heads_w * ffn_block});
    const std::size_t vlo = w * config.vocab / n_workers;
    const std::size_t vhi = (w + 1) * config.vocab / n_workers;
    plan.vocab_ranges.push_back({vlo, vhi});
  }
  plan.validate(config);
  return plan;
}

void ShardPlan::validate(const ModelConfig& config) const {
  auto check_partition = [](const std::vector<Range>& rs, std::size_t domain,
                            const char* what) {
    std::size_t expect = 0;
    for (const Range& r : rs) {
      if (r.lo != expect || r.hi < r.lo)
        throw ConfigError(std::string("shard ranges for ") + what +
                          " do not partition the domain");
      expect = r.hi;
    }
    if (expect != domain)
      throw ConfigError(std::string("shard ranges for ") + what +
                        " do not cover the domain");
  };
  if (head_ranges.size() != n_workers || vocab_ranges.size() != n_workers ||
      ffn_ranges.size() != n_workers || kv_head_ranges.size() != n_workers)
    throw ConfigError("shard plan worker count mismatch");
  check_partition(head_ranges, config.n_head, "heads");
  check_partition(kv_head_ranges, config.n_kv_head, "kv heads");
  check_partition(vocab_ranges, config.vocab, "vocab");
  check_partition(ffn_ranges, config.ffn_dim, "ffn");
  const std::size_t group = config.n_head / config.n_kv_head;
  for (const Range& r : head_ranges)
    if (r.size() % group != 0)
      throw ConfigError("per-worker head count must be a multiple of the GQA "
                        "group size " +
                        std::to_string(group));
}

const char* collective_name(Collective c) {
  switch (c) {
    case Collective::kTokenBroadcast: return "token_broadcast";
    case Collective::kEmbeddingBroadcast: return "embedding_broadcast";
    case Collective::kBlockReduce: return "block_reduce";
    case Collective::kLogitAllreduce: return "logit_allreduce";
    case Collective::kTopkGather: return "topk_gather";
  }
  return "?";
}

Transport::Transport(std::size_t n_workers) : n_workers_(n_workers) {
  if (n_workers == 0) throw ConfigError("transport needs >= 1 worker");
  step_bytes_.assign(n_workers, {});
  step_copies_.assign(n_workers, 0);
}

void Transport::check_open() const {
  if (closed_) throw TransportError("transport is closed");
}

void Transport::check_worker(std::size_t w) const {
  if (w >= n_workers_)
    throw RangeError("worker " + std::to_string(w) + " out of range");
}

void Transport::close() { closed_ = true; }

void Transport::begin_step(std::uint64_t step_index) {
  check_open();
  std::lock_guard lock(mu_);
  step_ = step_index;
  for (auto& per_worker : step_bytes_) per_worker.fill(0);
  std::fill(step_copies_.begin(), step_copies_.end(), 0);
}

void Transport::add_bytes(std::size_t worker, Collective c, std::uint64_t bytes) {
  std::lock_guard lock(mu_);
  step_bytes_[worker][static_cast<std::size_t>(c)] += bytes;
}

void Transport::add_copy(std::size_t worker) {
  check_worker(worker);
  std::lock_guard lock(mu_);
  ++step_copies_[worker];
}

std::int32_t Transport::broadcast_token(std::size_t root, std::int32_t token) {
  check_open();
  check_worker(root);
  add_bytes(root, Collective::kTokenBroadcast,
            kTokenWireBytes * (n_workers_ - 1));
  return token;
}

std::vector<float> Transport::broadcast_row(std::size_t root,
                                            std::span<const float> row) {
  check_open();
  check_worker(root);
  add_bytes(root, Collective::kEmbeddingBroadcast,
            static_cast<std::uint64_t>(row.size()) * 4 * (n_workers_ - 1));
  return {row.begin(), row.end()};
}

Tensor Transport::allreduce_sum(std::span<const Tensor> contributions,
                                Collective label) {
  check_open();
  if (contributions.size() != n_workers_)
    throw ProtocolError("allreduce expects one contribution per worker, got " +
                        std::to_string(contributions.size()));
  for (std::size_t w = 1; w < n_workers_; ++w)
    if (!contributions[w].same_shape(contributions[0]))
      throw ProtocolError("allreduce shape disagreement: worker 0 has " +
                          contributions[0].shape_str() + ", worker " +
                          std::to_string(w) + " has " +
                          contributions[w].shape_str());
  const std::uint64_t payload = contributions[0].numel() * 4;
  for (std::size_t w = 0; w < n_workers_; ++w)
    if (w != kRoot) add_bytes(w, label, payload);
  add_bytes(kRoot, label, payload * (n_workers_ - 1));

  Tensor result = contributions[0];
  for (std::size_t w = 1; w < n_workers_; ++w) {
    const float* src = contributions[w].data();
    float* dst = result.data();
    for (std::size_t e = 0; e < result.numel(); ++e) dst[e] += src[e];
  }
  return result;
}

std::span<float> Transport::register_output_buffer(std::size_t worker,
                                                   std::size_t slot,
                                                   std::size_t n_floats) {
  check_open();
  check_worker(worker);
  std::lock_guard lock(mu_);
  Slot& s = slots_[{worker, slot}];
  if (s.in_flight)
    throw ContentionError("slot " + std::to_string(slot) + " of worker " +
                          std::to_string(worker) + " is still in flight");
  s.data.assign(n_floats, 0.0f);
  s.in_flight = true;
  return {s.data.data(), s.data.size()};
}

void Transport::stage_copy(std::size_t worker, std::size_t slot,
                           std::span<const float> src) {
  std::span<float> dst = register_output_buffer(worker, slot, src.size());
  std::memcpy(dst.data(), src.data(), src.size() * sizeof(float));
  add_copy(worker);
}

Tensor Transport::reduce_slot_blocks(std::size_t slot, std::size_t n_blocks,
                                     std::size_t block_elems,
                                     std::span<const Range> worker_blocks) {
  check_open();
  if (worker_blocks.size() != n_workers_)
    throw ProtocolError("reduce needs a block range per worker");
  std::lock_guard lock(mu_);
  for (std::size_t w = 0; w < n_workers_; ++w) {
    auto it = slots_.find({w, slot});
    if (it == slots_.end() || !it->second.in_flight)
      throw ProtocolError("worker " + std::to_string(w) +
                          " has nothing registered in slot " + std::to_string(slot));
    if (it->second.data.size() != worker_blocks[w].size() * block_elems)
      throw ProtocolError("worker " + std::to_string(w) + " slot payload of " +
                          std::to_string(it->second.data.size()) +
                          " floats does not match its block range");
  }

  // Ascending global block order: the grouping is a property of the model,
  // not of the worker count, so every sharding sums identically.
  Tensor result({1, block_elems});
  for (std::size_t b = 0; b < n_blocks; ++b) {
    std::size_t owner = n_workers_;
    for (std::size_t w = 0; w < n_workers_; ++w)
      if (worker_blocks[w].contains(b)) {
        owner = w;
        break;
      }
    if (owner == n_workers_)
      throw ProtocolError("block " + std::to_string(b) + " has no owner");
    const Slot& s = slots_.at({owner, slot});
    const float* src =
        s.data.data() + (b - worker_blocks[owner].lo) * block_elems;
    float* dst = result.data();
    for (std::size_t e = 0; e < block_elems; ++e) dst[e] += src[e];
  }

  for (std::size_t w = 0; w < n_workers_; ++w) {
    slots_.at({w, slot}).in_flight = false;
    const std::uint64_t payload = worker_blocks[w].size() * block_elems * 4;
    if (w != kRoot)
      step_bytes_[w][static_cast<std::size_t>(Collective::kBlockReduce)] += payload;
  }
  step_bytes_[kRoot][static_cast<std::size_t>(Collective::kBlockReduce)] +=
      static_cast<std::uint64_t>(block_elems) * 4 * (n_workers_ - 1);
  return result;
}

void Transport::account_topk_gather(std::size_t root,
                                    std::span<const std::size_t> list_sizes) {
  check_open();
  check_worker(root);
  if (list_sizes.size() != n_workers_)
    throw ProtocolError("top-k gather needs a list per worker");
  for (std::size_t w = 0; w < n_workers_; ++w)
    if (w != root)
      add_bytes(w, Collective::kTopkGather, list_sizes[w] * kTopkEntryWireBytes);
}

std::uint64_t Transport::step_bytes(std::size_t worker, Collective c) const {
  std::lock_guard lock(mu_);
  return step_bytes_[worker][static_cast<std::size_t>(c)];
}

std::uint64_t Transport::step_bytes_total(std::size_t worker) const {
  std::lock_guard lock(mu_);
  std::uint64_t total = 0;
  for (std::uint64_t b : step_bytes_[worker]) total += b;
  return total;
}

std::uint64_t Transport::step_copies(std::size_t worker) const {
  std::lock_guard lock(mu_);
  return step_copies_[worker];
}

std::vector<Transport::MetricRow> Transport::step_metrics() const {
  std::lock_guard lock(mu_);
  std::vector<MetricRow> rows;
  for (std::size_t w = 0; w < n_workers_; ++w)
    for (std::size_t c = 0; c < 5; ++c)
      rows.push_back({step_, w, static_cast<Collective>(c), step_bytes_[w][c],
                      step_copies_[w]});
  return rows;
}

std::string Transport::metrics_csv_header() {
  return "step,worker,collective,bytes,copy_count";
}

std::string Transport::metrics_csv_row(const MetricRow& row) {
  return std::to_string(row.step) + "," + std::to_string(row.worker) + "," +
         collective_name(row.collective) + "," + std::to_string(row.bytes) +
         "," + std::to_string(row.copy_count);
}

std::vector<TopKEntry> local_topk(const Tensor& logits_shard, std::size_t k,
                                  std::size_t vocab_offset) {
  if (logits_shard.rank() != 2 || logits_shard.rows() != 1)
    throw DimensionError("logit shard must be [1 x shard_vocab], got " +
                         logits_shard.shape_str());
  if (k == 0) throw ConfigError("top-k requires k >= 1");
  return select_topk(logits_shard.row(0), k, vocab_offset);
}

std::vector<TopKEntry> merge_topk(std::span<const std::vector<TopKEntry>> lists,
                                  std::span<const Range> vocab_ranges,
                                  std::size_t k) {
  if (lists.size() != vocab_ranges.size())
    throw ProtocolError("one vocab range per shard list required");
  for (std::size_t a = 0; a < vocab_ranges.size(); ++a)
    for (std::size_t b = a + 1; b < vocab_ranges.size(); ++b) {
      const Range &ra = vocab_ranges[a], &rb = vocab_ranges[b];
      if (ra.lo < rb.hi && rb.lo < ra.hi)
        throw ProtocolError("vocab shards overlap: [" + std::to_string(ra.lo) +
                            "," + std::to_string(ra.hi) + ") and [" +
                            std::to_string(rb.lo) + "," + std::to_string(rb.hi) +
                            ")");
    }
  std::vector<TopKEntry> all;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    for (const TopKEntry& e : lists[i])
      if (!vocab_ranges[i].contains(static_cast<std::size_t>(e.token)))
        throw ProtocolError("token " + std::to_string(e.token) +
                            " outside its shard range");
    all.insert(all.end(), lists[i].begin(), lists[i].end());
  }
  std::sort(all.begin(), all.end(), topk_before);
  if (all.size() > k) all.resize(k);
  return all;
}

DistributedDecoder::DistributedDecoder(const ModelConfig& config,
                                       std::uint64_t weight_seed,
                                       std::size_t n_workers, Transport& transport,
                                       DistributedModes modes)
    : config_(config), plan_(ShardPlan::even(config, n_workers)),
      transport_(transport), modes_(modes) {
  if (transport.n_workers() != n_workers)
    throw ConfigError("transport sized for " +
                      std::to_string(transport.n_workers()) + " workers, plan has " +
                      std::to_string(n_workers));
  const DecoderWeights full = synth_weights(config, weight_seed);
  const std::size_t hs = config.head_size;
  const std::size_t ffn_block = config.ffn_dim / config.n_head;

  workers_.resize(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) {
    Worker& wk = workers_[w];
    const Range heads = plan_.head_ranges[w];
    const Range kvh = plan_.kv_head_ranges[w];
    const Range ffn = plan_.ffn_ranges[w];
    wk.embedding = full.embedding;
    wk.final_norm = full.final_norm;
    wk.layers.resize(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l) {
      const LayerWeights& src = full.layers[l];
      Worker::Layer& dst = wk.layers[l];
      dst.wq = slice_cols(src.wq, heads.lo * hs, heads.hi * hs);
      dst.wk = slice_cols(src.wk, kvh.lo * hs, kvh.hi * hs);
      dst.wv = slice_cols(src.wv, kvh.lo * hs, kvh.hi * hs);
      for (std::size_t h = heads.lo; h < heads.hi; ++h)
        dst.wo_blocks.push_back(slice_rows(src.wo, h * hs, (h + 1) * hs));
      dst.w_gate = slice_cols(src.w_gate, ffn.lo, ffn.hi);
      dst.w_up = slice_cols(src.w_up, ffn.lo, ffn.hi);
      for (std::size_t b = heads.lo; b < heads.hi; ++b)
        dst.wdown_blocks.push_back(
            slice_rows(src.w_down, b * ffn_block, (b + 1) * ffn_block));
      dst.attn_norm = src.attn_norm;
      dst.ffn_norm = src.ffn_norm;
    }
    wk.cache = std::make_unique<F32KvCache>(config.layers, 1, kvh.size(), hs,
                                            config.max_seq);
  }
}

void DistributedDecoder::check_replicas(std::size_t layer_tag) const {
  const Worker& w0 = workers_[0];
  for (std::size_t w = 1; w < workers_.size(); ++w) {
    const float* a = w0.x.data();
    const float* b = workers_[w].x.data();
    if (!std::equal(a, a + w0.x.numel(), b,
                    [](float l, float r) {
                      return std::memcmp(&l, &r, sizeof(float)) == 0;
                    }))
      throw ProtocolError("workers 0 and " + std::to_string(w) +
                          " diverged on the replicated stream at phase " +
                          std::to_string(layer_tag));
  }
}

std::span<float> DistributedDecoder::reduction_dst(std::size_t worker,
                                                   std::size_t slot,
                                                   std::size_t n_floats,
                                                   Tensor& scratch) {
  if (modes_.staging_copies) {
    scratch = Tensor({1, n_floats});
    return scratch.flat();
  }
  // Zero-copy: the last matmul before the collective writes straight into
  // the communication region.
  return transport_.register_output_buffer(worker, slot, n_floats);
}

void DistributedDecoder::finish_reduction(std::size_t worker, std::size_t slot,
                                          const Tensor& scratch) {
  if (modes_.staging_copies) transport_.stage_copy(worker, slot, scratch.flat());
}

std::int32_t DistributedDecoder::step(std::int32_t token,
                                      const SamplerConfig& sampler,
                                      std::uint64_t step_index) {
  if (pos_ >= config_.max_seq)
    throw CapacityError("cache full at max_seq " + std::to_string(config_.max_seq));
  if (token < 0 || static_cast<std::size_t>(token) >= config_.vocab)
    throw RangeError("token id " + std::to_string(token) + " outside vocab " +
                     std::to_string(config_.vocab));
  if (sampler.mode == SampleMode::kTopK &&
      (sampler.k == 0 || sampler.k > config_.vocab))
    throw ConfigError("top-k k=" + std::to_string(sampler.k) +
                      " outside [1, vocab=" + std::to_string(config_.vocab) + "]");
  const std::size_t d = config_.d_model;
  const std::size_t hs = config_.head_size;
  const std::size_t group = config_.n_head / config_.n_kv_head;
  const std::size_t n = workers_.size();
  // Metric rows are keyed by decode position; step_index only seeds the
  // sampling draw.
  transport_.begin_step(pos_);

  // Token-id broadcast (or the embedding-row baseline); every worker resolves
  // the same embedding bits either way.
  if (modes_.embedding_broadcast) {
    const float* row =
        workers_[kRoot].embedding.data() + static_cast<std::size_t>(token) * d;
    std::vector<float> shipped = transport_.broadcast_row(kRoot, {row, d});
    for (Worker& w : workers_) {
      w.x = Tensor({1, d});
      std::copy_n(shipped.data(), d, w.x.data());
    }
  } else {
    const std::int32_t tok = transport_.broadcast_token(kRoot, token);
    for (Worker& w : workers_) {
      w.x = Tensor({1, d});
      std::copy_n(w.embedding.data() + static_cast<std::size_t>(tok) * d, d,
                  w.x.data());
    }
  }

  const std::size_t t = pos_ + 1;
  for (std::size_t layer = 0; layer < config_.layers; ++layer) {
    const std::size_t attn_slot = layer * 2;
    const std::size_t ffn_slot = layer * 2 + 1;

    // Attention phase: column-parallel QKV, per-head output-projection
    // partials placed in the reduction slot.
    std::vector<Tensor> scratch(n);
    for (std::size_t w = 0; w < n; ++w) {
      Worker& wk = workers_[w];
      Worker::Layer& lw = wk.layers[layer];
      const Range heads = plan_.head_ranges[w];
      const Range kvh = plan_.kv_head_ranges[w];

      Tensor normed = rmsnorm_rows(wk.x, lw.attn_norm);
      Tensor q = matmul(normed, lw.wq);
      Tensor k = matmul(normed, lw.wk);
      Tensor v = matmul(normed, lw.wv);
      rope_rows(q, heads.size(), hs, pos_);
      rope_rows(k, kvh.size(), hs, pos_);

      Tensor k_slice({kvh.size(), hs});
      std::copy_n(k.data(), k.numel(), k_slice.data());
      Tensor v_slice({kvh.size(), hs});
      std::copy_n(v.data(), v.numel(), v_slice.data());
      wk.cache->append_token(layer, 0, k_slice, v_slice);

      std::span<float> dst = reduction_dst(w, attn_slot, heads.size() * d,
                                           scratch[w]);
      AttentionParams single;
      single.head_size = hs;
      Tensor qh({1, hs});
      for (std::size_t h = heads.lo; h < heads.hi; ++h) {
        std::copy_n(q.data() + (h - heads.lo) * hs, hs, qh.data());
        const std::size_t kv_local = h / group - kvh.lo;
        Tensor oh = attention_decode_f32(qh, wk.cache->key_head(layer, 0, kv_local, t),
                                         wk.cache->value_head(layer, 0, kv_local, t),
                                         single, t);
        fused_matmul_into(dst.subspan((h - heads.lo) * d, d), oh,
                          lw.wo_blocks[h - heads.lo], PostOp::kNone);
      }
      finish_reduction(w, attn_slot, scratch[w]);
    }
    Tensor attn_sum = transport_.reduce_slot_blocks(attn_slot, config_.n_head, d,
                                                    plan_.head_ranges);
    for (Worker& wk : workers_) {
      float* x = wk.x.data();
      const float* s = attn_sum.data();
      for (std::size_t e = 0; e < d; ++e) x[e] += s[e];
    }
    check_replicas(layer * 2);

    // FFN phase: column-parallel gate/up, block-partial down projection.
    const std::size_t ffn_block = config_.ffn_dim / config_.n_head;
    for (std::size_t w = 0; w < n; ++w) {
      Worker& wk = workers_[w];
      Worker::Layer& lw = wk.layers[layer];
      const Range heads = plan_.head_ranges[w];

      Tensor normed = rmsnorm_rows(wk.x, lw.ffn_norm);
      Tensor gate = fused_matmul(normed, lw.w_gate, PostOp::kBiasSilu);
      Tensor up = matmul(normed, lw.w_up);
      float* gp = gate.data();
      const float* upp = up.data();
      for (std::size_t e = 0; e < gate.numel(); ++e) gp[e] *= upp[e];

      std::span<float> dst = reduction_dst(w, ffn_slot, heads.size() * d,
                                           scratch[w]);
      Tensor h_block({1, ffn_block});
      for (std::size_t b = heads.lo; b < heads.hi; ++b) {
        std::copy_n(gate.data() + (b - heads.lo) * ffn_block, ffn_block,
                    h_block.data());
        fused_matmul_into(dst.subspan((b - heads.lo) * d, d), h_block,
                          lw.wdown_blocks[b - heads.lo], PostOp::kNone);
      }
      finish_reduction(w, ffn_slot, scratch[w]);
    }
    Tensor ffn_sum = transport_.reduce_slot_blocks(ffn_slot, config_.n_head, d,
                                                   plan_.head_ranges);
    for (Worker& wk : workers_) {
      float* x = wk.x.data();
      const float* s = ffn_sum.data();
      for (std::size_t e = 0; e < d; ++e) x[e] += s[e];
    }
    check_replicas(layer * 2 + 1);
  }
  pos_ = t;

  // Logit phase: each worker scores only its vocab shard.
  std::vector<Tensor> shards(n);
  for (std::size_t w = 0; w < n; ++w) {
    Worker& wk = workers_[w];
    const Range vr = plan_.vocab_ranges[w];
    Tensor final_norm = rmsnorm_rows(wk.x, wk.final_norm);
    Tensor emb_shard = slice_rows(wk.embedding, vr.lo, vr.hi);
    shards[w] = matmul(final_norm, emb_shard, /*transpose_b=*/true);
  }

  std::int32_t decision = 0;
  const std::size_t k_eff =
      sampler.mode == SampleMode::kTopK ? sampler.k : std::max<std::size_t>(1, sampler.k);
  if (modes_.full_logit_allreduce) {
    // Baseline: every worker contributes its shard scattered into a
    // full-vocab vector; the sum is exact because shards are disjoint.
    std::vector<Tensor> contributions(n);
    for (std::size_t w = 0; w < n; ++w) {
      contributions[w] = Tensor({1, config_.vocab});
      std::copy_n(shards[w].data(), shards[w].numel(),
                  contributions[w].data() + plan_.vocab_ranges[w].lo);
    }
    root_logits_ = transport_.allreduce_sum(contributions,
                                            Collective::kLogitAllreduce);
    has_root_logits_ = true;
    merged_ = select_topk(root_logits_.row(0), k_eff, 0);
    decision = sample(root_logits_, sampler, step_index);
  } else {
    std::vector<std::vector<TopKEntry>> lists(n);
    std::vector<std::size_t> sizes(n);
    for (std::size_t w = 0; w < n; ++w) {
      lists[w] = local_topk(shards[w], k_eff, plan_.vocab_ranges[w].lo);
      sizes[w] = lists[w].size();
    }
    transport_.account_topk_gather(kRoot, sizes);
    merged_ = merge_topk(lists, plan_.vocab_ranges, k_eff);
    has_root_logits_ = false;
    decision = sampler.mode == SampleMode::kGreedy
                   ? merged_.front().token
                   : sample_from_entries(merged_, sampler.seed, step_index);
  }
  // The chosen id reaches the other workers as the next step's token
  // broadcast; broadcasting it here too would double-charge the link.
  return decision;
}

const Tensor& DistributedDecoder::last_root_logits() const {
  if (!has_root_logits_)
    throw ProtocolError("full logits exist only in full_logit_allreduce mode");
  return root_logits_;
}

std::vector<std::int32_t> distributed_generate(
    const ModelConfig& config, std::uint64_t weight_seed, std::size_t n_workers,
    Transport& transport, std::span<const std::int32_t> prompt, std::size_t n_out,
    const SamplerConfig& sampler, DistributedModes modes) {
  if (prompt.empty()) throw ConfigError("prompt must be non-empty");
  DistributedDecoder dec(config, weight_seed, n_workers, transport, modes);
  // Prompt tokens are teacher-forced; only the last step's sample survives as
  // output token 0, drawn at sampling step 0 like the single-process path.
  std::int32_t next = 0;
  for (std::int32_t tok : prompt) next = dec.step(tok, sampler, 0);
  std::vector<std::int32_t> out;
  out.reserve(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    out.push_back(next);
    if (i + 1 < n_out) next = dec.step(next, sampler, i + 1);
  }
  return out;
}

}  // namespace slim
