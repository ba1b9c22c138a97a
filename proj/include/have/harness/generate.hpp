#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "have/fusion.hpp"
#include "have/snapshot.hpp"
#include "have/toy_transformer.hpp"

namespace have::harness {

struct StopRule {
  static constexpr std::uint32_t kDefaultMaxLen = 32;

  std::uint32_t max_len = kDefaultMaxLen;
  std::optional<TokenId> stop_token;
};

struct Generation {
  std::vector<TokenId> tokens;
  std::vector<FusedDistribution> steps;
  std::vector<StepSnapshot> snapshots;
  bool stopped = false;  // ended on the stop token rather than max_len
};

// Live decoding. The prompt is fed token by token; every generated token
// comes from one decision snapshot. If `record` is given, the decision
// snapshots are appended to it (its header is set from the model).
// Throws InputError for an empty prompt or max_len == 0.
Generation generate(const toy::Model& model, std::span<const TokenId> prompt, const Policy& policy,
                    const StopRule& stop, TraceFile* record = nullptr);

// Replay: step t decides from trace.steps[t]. Later snapshots stay those of
// the recorded run, whatever this policy chooses. Throws TraceExhaustedError
// if the trace ends before max_len tokens or the stop token.
Generation generate(const TraceFile& trace, const Policy& policy, const StopRule& stop);

struct TracedRun {
  TraceFile trace;
  Generation generation;
};

// Exactly `steps` decisions with no stop token. Throws InputError when
// steps == 0.
TracedRun run_and_trace(const toy::Model& model, std::span<const TokenId> prompt,
                        std::uint32_t steps, const Policy& policy);

// Renders token ids as text using the surfaces seen in the given snapshots.
// Sinks are skipped; tokenizer space glyphs become spaces; unknown ids
// render as "[id]".
std::string render_tokens(std::span<const TokenId> ids, std::span<const StepSnapshot> snapshots);

// The generated text: the toy vocabulary when `header` names it, otherwise
// render_tokens over the generation's own snapshots.
std::string render_generation(const Generation& gen, const TraceHeader& header);

}  // namespace have::harness
