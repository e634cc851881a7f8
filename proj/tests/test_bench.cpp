// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "slim/bench.hpp"
#include "slim/errors.hpp"
#include "slim/report.hpp"
#include "slim/rng.hpp"

using namespace slim;

TEST_CASE("csv round-trips through parse, including awkward strings") {
  BenchReport report;
  report.add("exp,1", "a=\"quoted\"", "metric", 1.25, "ms", 10, 3);
  report.add("plain", "b=2", "count", -7.5e-12, "bytes");
  report.add("unicode", "len=1024", "value", 61.57, "tokens/s", 1, 0);
  report.footer("a note, with commas");
  report.footer("another note");

  const std::string csv = report.to_csv();
  const BenchReport parsed = BenchReport::from_csv(csv);
  CHECK(parsed == report);
  CHECK(parsed.to_csv() == csv);
}

TEST_CASE("csv round-trips exact doubles") {
  BenchReport report;
  CounterRng rng(6, 0);
  for (int i = 0; i < 50; ++i)
    report.add("r", "i=" + std::to_string(i), "v",
               rng.next_unit_double() * 1e9, "u");
  CHECK(BenchReport::from_csv(report.to_csv()) == report);
}

TEST_CASE("malformed csv is rejected") {
  CHECK_THROWS_AS(BenchReport::from_csv("bogus header\n"), ConfigError);
  CHECK_THROWS_AS(
      BenchReport::from_csv(
          "experiment,params,metric,value,units,reps,warmup\nonly,three,fields\n"),
      ConfigError);
}

TEST_CASE("table rendering includes every row and footer") {
  BenchReport report;
  report.add("attention", "input=256,kernel=slim", "latency", 1.5, "ms", 10, 3);
  report.footer("reference only");
  const std::string table = report.to_table();
  CHECK(table.find("kernel=slim") != std::string::npos);
  CHECK(table.find("note: reference only") != std::string::npos);
}

TEST_CASE("attention bench emits gated, deterministic reports") {
  AttentionBenchOptions opt;
  opt.lengths = {8, 16};
  opt.head_size = 8;
  opt.reps = 2;
  opt.warmup = 1;
  opt.seed = 3;
  const BenchReport a = bench_attention(opt);
  const BenchReport b = bench_attention(opt);

  std::size_t correctness = 0, latency = 0, scratch = 0;
  for (const BenchRow& r : a.rows) {
    if (r.metric == "correctness") ++correctness;
    if (r.metric == "latency") ++latency;
    if (r.metric == "scratch_f32") ++scratch;
  }
  CHECK(correctness == 2);
  CHECK(latency == 6);
  CHECK(scratch == 6);

  // Non-timing columns are identical across runs.
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].experiment == b.rows[i].experiment);
    CHECK(a.rows[i].params == b.rows[i].params);
    CHECK(a.rows[i].metric == b.rows[i].metric);
    if (a.rows[i].metric != "latency") CHECK(a.rows[i].value == b.rows[i].value);
  }
  CHECK(!a.footers.empty());
}

TEST_CASE("attention bench rejects zero reps and empty lengths") {
  AttentionBenchOptions opt;
  opt.reps = 0;
  CHECK_THROWS_AS(bench_attention(opt), ConfigError);
  opt.reps = 1;
  opt.lengths = {};
  CHECK_THROWS_AS(bench_attention(opt), ConfigError);
}

TEST_CASE("throughput bench reports decode-only tokens per second") {
  ThroughputBenchOptions opt;
  opt.batches = {2};
  opt.input_len = 4;
  opt.output_len = 4;
  opt.model.max_seq = 16;
  const BenchReport report = bench_throughput(opt);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].metric == "throughput_tokens_per_s");
  CHECK(report.rows[0].value > 0.0);
  CHECK(report.rows[0].params.find("batch=2") != std::string::npos);
}

TEST_CASE("throughput bench validation and memory guard") {
  ThroughputBenchOptions opt;
  opt.output_len = 0;
  CHECK_THROWS_AS(bench_throughput(opt), ConfigError);
  opt.output_len = 8;
  opt.batches = {1 << 20};
  opt.input_len = 4096;
  CHECK_THROWS_AS(bench_throughput(opt), CapacityError);
}

TEST_CASE("distributed bench gates equivalence and reports savings") {
  DistributedBenchOptions opt;
  opt.worker_counts = {1, 2};
  opt.steps = 4;
  opt.seed = 11;
  const BenchReport report = bench_distributed(opt);

  bool saw_equivalence = false;
  double broadcast_savings = 0, logit_savings = 0;
  for (const BenchRow& r : report.rows) {
    if (r.metric == "equivalence") saw_equivalence = true;
    if (r.metric == "broadcast_savings" &&
        r.params.find("workers=2") != std::string::npos)
      broadcast_savings = r.value;
    if (r.metric == "logit_savings" &&
        r.params.find("workers=2") != std::string::npos)
      logit_savings = r.value;
  }
  CHECK(saw_equivalence);
  CHECK(broadcast_savings >= 32.0);
  CHECK(logit_savings >= 10.0);
}

TEST_CASE("distributed bench surfaces sharding constraint violations") {
  DistributedBenchOptions opt;
  opt.worker_counts = {3};  // 8 heads do not split in 3
  CHECK_THROWS_AS(bench_distributed(opt), ConfigError);
}

TEST_CASE("kv plan emits the documented rows") {
  KvCacheSpec llama;
  llama.batch = 256;
  llama.input_len = 1024;
  llama.output_len = 1024;
  llama.layers = 32;
  llama.kv_heads = 32;
  llama.head_size = 128;
  llama.dtype_bytes = 2;
  const BenchReport report = kv_plan(llama);

  double payload = 0, ratio = 0;
  for (const BenchRow& r : report.rows) {
    if (r.metric == "payload_bytes") payload = r.value;
    if (r.metric == "int8_with_scales_ratio") ratio = r.value;
  }
  CHECK(payload == 274877906944.0);
  CHECK(ratio == 0.515625);
  bool note = false;
  for (const std::string& f : report.footers)
    if (f.find("128 GB") != std::string::npos) note = true;
  CHECK(note);
}

TEST_CASE("kv plan unit spec and dtype linearity") {
  KvCacheSpec unit;
  unit.dtype_bytes = 1;
  const BenchReport r1 = kv_plan(unit);
  CHECK(r1.rows[0].value == 2.0);

  KvCacheSpec two = unit;
  two.dtype_bytes = 2;
  const BenchReport r2 = kv_plan(two);
  CHECK(r2.rows[0].value == 4.0);
  CHECK(r1.rows[1].value == r2.rows[1].value);  // int8 payload is dtype-free
}
