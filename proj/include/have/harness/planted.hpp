#pragma once

/**
 * Planted-evidence snapshots: constructed decoding steps with a known
 * correct token.
 *
 * Each snapshot has a near-uniform P_t over ten candidate tokens (one of
 * them the gold token, at a random rank), a lower-probability "strong
 * distractor" just below the candidates, and low-probability filler. The
 * context holds a BOS sink, repeated whitespace sinks, the gold token once,
 * one candidate distractor twice, the other candidates once, and repeated
 * filler.
 *
 * A minority of heads (retrieval heads) attend mostly to unique content,
 * chiefly the gold position. The remaining background heads spread their
 * mass over repeated tokens and the candidate distractor. Gold positions
 * carry larger value norms. Head gating therefore upweights the retrieval
 * heads, and value calibration boosts the gold position inside every head.
 *
 * In a fraction of instances ("conflicts") the retrieval heads also attend
 * strongly to the strong distractor. It stays out of a Top-10 support but
 * wins once the support grows enough to admit it.
 */

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "have/fusion.hpp"
#include "have/snapshot.hpp"

namespace have::harness {

struct PlantedParams {
  std::uint32_t instances = 200;
  std::uint64_t seed = 20240917;
  std::uint32_t vocab_size = 64;
  std::uint32_t num_layers = 2;
  std::uint32_t num_heads = 4;
  std::uint32_t num_kv_heads = 2;
  std::uint32_t candidates = 10;
  std::uint32_t retrieval_heads = 2;
  double conflict_rate = 0.3;
  // P_t is exactly one-hot on a random candidate (entropy gating check).
  bool one_hot = false;
};

struct PlantedInstance {
  StepSnapshot snapshot;
  TokenId gold = 0;
  TokenId distractor = 0;         // the candidate background heads favour
  TokenId strong_distractor = 0;  // ranked just below the candidates
  std::vector<TokenId> candidates;
  bool conflict = false;
};

std::vector<PlantedInstance> make_planted_suite(const PlantedParams& params);

TraceHeader planted_header(const PlantedParams& params);

// Fraction of instances whose chosen token is the gold token.
double gold_selection_rate(std::span<const PlantedInstance> suite, const Policy& policy);

// U_t(gold) under `cfg`: the gold token's share of the Top-R restricted
// evidence.
double gold_evidence_share(const PlantedInstance& instance, const DecodeConfig& cfg);

// Writes one single-step trace per instance plus "dataset.jsonl" whose
// records point at them, with the gold token's surface as the answer.
void write_planted_dataset(std::span<const PlantedInstance> suite, const PlantedParams& params,
                           const std::filesystem::path& dir);

}  // namespace have::harness
