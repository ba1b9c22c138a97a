#include "have/harness/generate.hpp"

#include <unordered_map>

#include "have/error.hpp"

namespace have::harness {
namespace {

// Records one decision and reports whether generation should stop.
bool accept(Generation& out, StepSnapshot snapshot, FusedDistribution step, const StopRule& stop) {
  const TokenId chosen = step.chosen;
  out.tokens.push_back(chosen);
  out.steps.push_back(std::move(step));
  out.snapshots.push_back(std::move(snapshot));
  if (stop.stop_token && chosen == *stop.stop_token) {
    out.stopped = true;
    return true;
  }
  return out.tokens.size() >= stop.max_len;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

Generation generate(const toy::Model& model, std::span<const TokenId> prompt, const Policy& policy,
                    const StopRule& stop, TraceFile* record) {
  if (prompt.empty()) throw InputError("generate: empty prompt");
  if (stop.max_len == 0) throw InputError("generate: max_len must be at least 1");

  toy::KVCache cache(model.config());
  for (std::size_t i = 0; i + 1 < prompt.size(); ++i) toy::forward_step(model, cache, prompt[i]);

  if (record) record->header = model.trace_header();
  Generation out;
  TokenId next = prompt.back();
  while (true) {
    StepSnapshot snapshot = toy::forward_step(model, cache, next);
    FusedDistribution step = decode_with(policy, snapshot);
    next = step.chosen;
    if (record) record->steps.push_back(snapshot);
    if (accept(out, std::move(snapshot), std::move(step), stop)) break;
  }
  return out;
}

Generation generate(const TraceFile& trace, const Policy& policy, const StopRule& stop) {
  if (stop.max_len == 0) throw InputError("generate: max_len must be at least 1");
  Generation out;
  for (std::size_t t = 0;; ++t) {
    if (t >= trace.steps.size()) {
      throw TraceExhaustedError("trace has " + std::to_string(trace.steps.size()) +
                                " steps, replay needs more (max_len " +
                                std::to_string(stop.max_len) + ")");
    }
    const StepSnapshot& snapshot = trace.steps[t];
    if (accept(out, snapshot, decode_with(policy, snapshot), stop)) break;
  }
  return out;
}

TracedRun run_and_trace(const toy::Model& model, std::span<const TokenId> prompt,
                        std::uint32_t steps, const Policy& policy) {
  if (steps == 0) throw InputError("run_and_trace: steps must be at least 1");
  TracedRun run;
  run.generation = generate(model, prompt, policy, StopRule{steps, std::nullopt}, &run.trace);
  return run;
}

std::string render_tokens(std::span<const TokenId> ids, std::span<const StepSnapshot> snapshots) {
  std::unordered_map<TokenId, const ContextToken*> known;
  for (const StepSnapshot& s : snapshots) {
    for (const ContextToken& tok : s.context) known.try_emplace(tok.token_id, &tok);
  }
  std::string text;
  for (TokenId id : ids) {
    auto it = known.find(id);
    if (it == known.end()) {
      text += "[" + std::to_string(id) + "]";
      continue;
    }
    if (it->second->is_sink) continue;
    text += it->second->surface;
  }
  replace_all(text, "▁", " ");
  replace_all(text, "Ġ", " ");
  replace_all(text, "Ċ", "\n");
  const auto first = text.find_first_not_of(" \n\t");
  if (first == std::string::npos) return {};
  const auto last = text.find_last_not_of(" \n\t");
  return text.substr(first, last - first + 1);
}

std::string render_generation(const Generation& gen, const TraceHeader& header) {
  if (header.tokenizer == toy::kToyTokenizerName) return toy::ToyVocab(header.vocab_size).decode(gen.tokens);
  return render_tokens(gen.tokens, gen.snapshots);
}

}  // namespace have::harness
