// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slim {

// One measurement or derived quantity. Timing rows carry their rep and
// warm-up counts; non-timing rows leave them at zero.
struct BenchRow {
  std::string experiment;
  std::string params;
  std::string metric;
  double value = 0.0;
  std::string units;
  std::uint64_t reps = 0;
  std::uint64_t warmup = 0;

  bool operator==(const BenchRow&) const = default;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<std::string> footers;  // reference notes, never assertions

  bool operator==(const BenchReport&) const = default;

  void add(std::string experiment, std::string params, std::string metric,
           double value, std::string units, std::uint64_t reps = 0,
           std::uint64_t warmup = 0);
  void footer(std::string note);

  // CSV with header "experiment,params,metric,value,units,reps,warmup";
  // footers become trailing "# ..." comment lines. Values print with enough
  // digits that parse(to_csv()) reproduces the report exactly.
  std::string to_csv() const;
  static BenchReport from_csv(const std::string& text);

  // Aligned text table for terminals.
  std::string to_table() const;
};

}  // namespace slim
