// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: runs every pinned-tolerance contract end to end and
// prints one line per criterion. Exit code 0 only when everything holds.
#include <algorithm>
#include <cstdio>
#include <vector>

#include "slim/verify.hpp"

int main() {
  const std::vector<slim::CheckResult> results = slim::run_all_checks();
  bool all_pass = true;
  int idx = 0;
  for (const slim::CheckResult& r : results) {
    ++idx;
    std::printf("[%s] criterion %2d %-22s %s\n", r.pass ? "PASS" : "FAIL", idx,
                r.name.c_str(), r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  std::printf("%d/%d criteria passed\n",
              static_cast<int>(std::count_if(results.begin(), results.end(),
                                             [](const auto& r) { return r.pass; })),
              static_cast<int>(results.size()));
  return all_pass ? 0 : 1;
}
