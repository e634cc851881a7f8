// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace slim {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

// Equivalence and contract suites with pinned tolerances; the CLI `verify`
// subcommand and the acceptance test binary both run these.
CheckResult check_slim_equivalence();   // slim vs naive, 200 random cases
CheckResult check_flash_equivalence();  // flash vs naive incl. ±40 stress
CheckResult check_quant_bound();        // 1000 slices round-trip + isolation
CheckResult check_planner();            // volume formula value + linearity
CheckResult check_hybrid_exact();       // hybrid matmul vs scalar oracle
CheckResult check_int8_end_to_end();    // int8 vs f32 streams over 100 seeds
CheckResult check_distributed_exact();  // streams across worker counts + topk
CheckResult check_comm_reduction();     // broadcast and logit byte ratios
CheckResult check_zero_copy();          // copy counters and mode equivalence
CheckResult check_bench_shape();        // attention report shape with gates

std::vector<CheckResult> run_all_checks();

}  // namespace slim
