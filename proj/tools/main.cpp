// SPDX-License-Identifier: Apache-2.0
//
// slimengine CLI: equivalence verification and the benchmark tables.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "slim/bench.hpp"
#include "slim/errors.hpp"
#include "slim/kvcache.hpp"
#include "slim/report.hpp"
#include "slim/verify.hpp"

namespace {

void emit(const slim::BenchReport& report, const std::string& csv_path) {
  std::fputs(report.to_table().c_str(), stdout);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw slim::ConfigError("cannot open " + csv_path);
    out << report.to_csv();
    std::printf("csv written to %s\n", csv_path.c_str());
  }
}

std::vector<slim::AttentionKernel> parse_kernels(const std::vector<std::string>& names) {
  std::vector<slim::AttentionKernel> kernels;
  for (const std::string& n : names) {
    if (n == "naive")
      kernels.push_back(slim::AttentionKernel::kNaive);
    else if (n == "slim")
      kernels.push_back(slim::AttentionKernel::kSlim);
    else if (n == "flash")
      kernels.push_back(slim::AttentionKernel::kFlash);
    else
      throw slim::ConfigError("unknown kernel '" + n +
                              "' (expected naive, slim or flash)");
  }
  return kernels;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slimengine: CPU transformer decode kernels with INT8 KV cache "
               "and tensor-parallel verification"};
  app.require_subcommand(1);

  // ---- bench ----
  CLI::App* bench = app.add_subcommand("bench", "run a benchmark table");
  bench->require_subcommand(1);

  slim::AttentionBenchOptions attn;
  std::vector<std::string> kernel_names = {"naive", "slim", "flash"};
  std::string csv_path;
  CLI::App* battn = bench->add_subcommand(
      "attention", "kernel latency vs input length, correctness-gated");
  battn->add_option("--lengths", attn.lengths, "input lengths")
      ->delimiter(',')
      ->capture_default_str();
  battn->add_option("--kernels", kernel_names, "kernels to time")
      ->delimiter(',')
      ->capture_default_str();
  battn->add_option("--head-size", attn.head_size)->capture_default_str();
  battn->add_option("--slim-block", attn.slim_block_rows, "query rows per slim block")
      ->capture_default_str();
  battn->add_option("--tile-q", attn.flash_tile_q)->capture_default_str();
  battn->add_option("--tile-k", attn.flash_tile_k)->capture_default_str();
  battn->add_option("--reps", attn.reps)->capture_default_str();
  battn->add_option("--warmup", attn.warmup)->capture_default_str();
  battn->add_option("--seed", attn.seed)->capture_default_str();
  battn->add_option("--csv", csv_path, "also write CSV here");

  slim::ThroughputBenchOptions tp;
  std::string cache_name = "int8";
  std::string tp_config = "toy";
  CLI::App* btp = bench->add_subcommand(
      "throughput", "decode tokens/s over batched sequences");
  btp->add_option("--batches", tp.batches)->delimiter(',')->capture_default_str();
  btp->add_option("--in-len", tp.input_len)->capture_default_str();
  btp->add_option("--out-len", tp.output_len)->capture_default_str();
  btp->add_option("--cache", cache_name, "kv cache dtype: f32 or int8")
      ->check(CLI::IsMember({"f32", "int8"}))
      ->capture_default_str();
  btp->add_option("--config", tp_config,
                  "model preset: toy (4 heads x 16) or wide (8 heads x 8)")
      ->check(CLI::IsMember({"toy", "wide"}))
      ->capture_default_str();
  btp->add_option("--seed", tp.seed)->capture_default_str();
  btp->add_option("--csv", csv_path, "also write CSV here");

  slim::DistributedBenchOptions dist;
  std::string step_csv_path;
  CLI::App* bdist = bench->add_subcommand(
      "distributed", "tensor-parallel step latency and transport bytes");
  bdist->add_option("--workers", dist.worker_counts)
      ->delimiter(',')
      ->capture_default_str();
  bdist->add_option("--steps", dist.steps)->capture_default_str();
  bdist->add_option("--k", dist.k, "top-k width for the logit reduction")
      ->capture_default_str();
  bdist->add_option("--seed", dist.seed)->capture_default_str();
  bdist->add_option("--csv", csv_path, "also write CSV here");
  bdist->add_option("--step-csv", step_csv_path,
                    "write per-step transport metrics (step,worker,collective,"
                    "bytes,copy_count) here");

  slim::KvCacheSpec spec;
  std::uint64_t scale_bytes = 4;
  bool llama_preset = false;
  CLI::App* bplan = bench->add_subcommand("kv-plan", "cache volume planning table");
  bplan->add_option("--batch", spec.batch)->capture_default_str();
  bplan->add_option("--in-len", spec.input_len)->capture_default_str();
  bplan->add_option("--out-len", spec.output_len)->capture_default_str();
  bplan->add_option("--layers", spec.layers)->capture_default_str();
  bplan->add_option("--kv-heads", spec.kv_heads)->capture_default_str();
  bplan->add_option("--head-size", spec.head_size)->capture_default_str();
  bplan->add_option("--dtype-bytes", spec.dtype_bytes)->capture_default_str();
  bplan->add_option("--scale-bytes", scale_bytes)->capture_default_str();
  bplan->add_flag("--llama2-7b", llama_preset,
                  "preset: b=256, 1024+1024 tokens, 32 layers, 32 heads x 128");
  bplan->add_option("--csv", csv_path, "also write CSV here");

  // ---- verify ----
  CLI::App* verify = app.add_subcommand(
      "verify", "run every equivalence suite at its pinned tolerance");
  verify->add_option("--csv", csv_path, "also write CSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (battn->parsed()) {
      attn.kernels = parse_kernels(kernel_names);
      emit(slim::bench_attention(attn), csv_path);
    } else if (btp->parsed()) {
      tp.cache_dtype =
          cache_name == "int8" ? slim::CacheDtype::kInt8 : slim::CacheDtype::kF32;
      if (tp_config == "wide")
        tp.model = slim::DistributedBenchOptions::distributed_toy_config();
      const std::size_t seq = tp.input_len + tp.output_len;
      if (seq > tp.model.max_seq) tp.model.max_seq = seq;
      emit(slim::bench_throughput(tp), csv_path);
    } else if (bdist->parsed()) {
      std::vector<slim::Transport::MetricRow> step_rows;
      if (!step_csv_path.empty()) dist.step_metrics = &step_rows;
      emit(slim::bench_distributed(dist), csv_path);
      if (!step_csv_path.empty()) {
        std::ofstream out(step_csv_path);
        if (!out) throw slim::ConfigError("cannot open " + step_csv_path);
        out << slim::Transport::metrics_csv_header() << '\n';
        for (const auto& row : step_rows)
          out << slim::Transport::metrics_csv_row(row) << '\n';
        std::printf("per-step metrics written to %s\n", step_csv_path.c_str());
      }
    } else if (bplan->parsed()) {
      if (llama_preset) {
        spec.batch = 256;
        spec.input_len = 1024;
        spec.output_len = 1024;
        spec.layers = 32;
        spec.kv_heads = 32;
        spec.head_size = 128;
        spec.dtype_bytes = 2;
      }
      emit(slim::kv_plan(spec, scale_bytes), csv_path);
    } else if (verify->parsed()) {
      slim::BenchReport report;
      bool all_pass = true;
      std::string first_failure;
      for (const slim::CheckResult& r : slim::run_all_checks()) {
        std::printf("[%s] %-22s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str());
        report.add("verify", r.name, "pass", r.pass ? 1.0 : 0.0, "bool");
        if (!r.pass && first_failure.empty()) first_failure = r.name;
        all_pass = all_pass && r.pass;
      }
      if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        out << report.to_csv();
      }
      if (!all_pass) {
        std::fprintf(stderr, "verification failed: %s\n", first_failure.c_str());
        return 1;
      }
      std::printf("all checks passed\n");
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
