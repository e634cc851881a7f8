// SPDX-License-Identifier: Apache-2.0
#include "slim/topk.hpp"

#include <algorithm>
#include <cmath>

#include "slim/errors.hpp"
#include "slim/rng.hpp"

namespace slim {

std::vector<TopKEntry> select_topk(std::span<const float> logits, std::size_t k,
                                   std::size_t vocab_offset) {
  std::vector<TopKEntry> entries(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    entries[i] = {static_cast<std::int32_t>(vocab_offset + i), logits[i]};
  const std::size_t take = std::min(k, entries.size());
  std::partial_sort(entries.begin(), entries.begin() + take, entries.end(),
                    topk_before);
  entries.resize(take);
  return entries;
}

std::int32_t sample_from_entries(std::span<const TopKEntry> entries,
                                 std::uint64_t seed, std::uint64_t step) {
  if (entries.empty()) throw ConfigError("sampling from an empty entry list");
  // entries[0] holds the max logit, so the exponentials cannot overflow.
  const float mx = entries[0].logit;
  std::vector<float> p(entries.size());
  float total = 0.0f;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    p[i] = std::exp(entries[i].logit - mx);
    total += p[i];
  }
  CounterRng rng(seed, step);
  const double u = rng.next_unit_double() * static_cast<double>(total);
  double acc = 0.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    acc += static_cast<double>(p[i]);
    if (u < acc) return entries[i].token;
  }
  return entries.back().token;
}

}  // namespace slim
