// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace slim {

struct TopKEntry {
  std::int32_t token = 0;
  float logit = 0.0f;

  bool operator==(const TopKEntry&) const = default;
};

// Total order used everywhere a top-k is formed: logit descending, token id
// ascending on ties.
inline bool topk_before(const TopKEntry& a, const TopKEntry& b) {
  if (a.logit != b.logit) return a.logit > b.logit;
  return a.token < b.token;
}

// The k best entries of a logit span, with token ids offset into the global
// vocabulary. Returns fewer than k only when the span is shorter than k.
std::vector<TopKEntry> select_topk(std::span<const float> logits, std::size_t k,
                                   std::size_t vocab_offset);

// One renormalized softmax draw over a sorted entry list. The uniform comes
// from the counter generator at (seed, step), so a given (entries, seed,
// step) triple always picks the same token.
std::int32_t sample_from_entries(std::span<const TopKEntry> entries,
                                 std::uint64_t seed, std::uint64_t step);

}  // namespace slim
