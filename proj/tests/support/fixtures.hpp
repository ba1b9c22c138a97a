#pragma once

// Small hand-built snapshots shared by the unit tests.

#include <string>
#include <vector>

#include "have/snapshot.hpp"

namespace have::testing {

inline ContextToken token(std::uint32_t pos, TokenId id, std::string surface, bool sink = false) {
  return ContextToken{pos, id, std::move(surface), sink};
}

// One layer, `heads` heads sharing one kv-head, the given context, every
// head attending with `row`, value norms `norms`, and logits of size vocab.
inline StepSnapshot single_layer(std::vector<ContextToken> context, std::vector<float> row,
                                 std::vector<float> norms, std::vector<float> logits,
                                 std::uint32_t heads = 1) {
  StepSnapshot s;
  s.step = 0;
  s.context = std::move(context);
  s.num_layers = 1;
  s.num_heads = heads;
  s.num_kv_heads = 1;
  for (std::uint32_t h = 0; h < heads; ++h) s.attention.insert(s.attention.end(), row.begin(), row.end());
  s.value_norms = std::move(norms);
  s.logits = std::move(logits);
  return s;
}

}  // namespace have::testing
