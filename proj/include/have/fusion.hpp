#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "have/head_gating.hpp"
#include "have/snapshot.hpp"
#include "have/value_calibration.hpp"

namespace have {

enum class TieBreak : std::uint8_t {
  kLowestId,
};

struct FusionConfig {
  static constexpr double kDefaultAlpha = 1.0;
  static constexpr std::uint32_t kDefaultTopRank = 10;

  double alpha = kDefaultAlpha;
  std::uint32_t top_rank = kDefaultTopRank;
  TieBreak tie_break = TieBreak::kLowestId;
};

struct Ablations {
  bool no_hag = false;  // uniform head weights
  bool no_vc = false;   // sink-corrected attention only, no value norms

  friend bool operator==(const Ablations&, const Ablations&) = default;
};

struct DecodeConfig {
  FusionConfig fusion;
  GatingConfig gating;
  CalibrationConfig calibration;
  Ablations ablations;
};

struct FusedDistribution {
  std::vector<double> p;          // softmax of the logits
  std::vector<TokenId> support;   // R_t, ascending ids
  TokenEvidence evidence;         // U_t confined to R_t
  double h_norm = 0.0;
  std::vector<double> s;          // P + alpha * H_norm * U, unnormalized
  std::vector<double> s_hat;      // s / sum(s), for reporting
  TokenId chosen = 0;
  HeadWeights head_weights;

  bool fallback_used() const noexcept { return evidence.fallback_used; }
};

// The min(R, |V|) highest-probability ids, ties broken toward the lower id,
// returned in ascending id order.
std::vector<TokenId> top_r_support(std::span<const double> p, std::uint32_t top_rank);

// -sum p ln p / ln |V|, clamped to [0, 1]. 0 ln 0 counts as 0. Throws
// DomainError when |V| < 2.
double normalized_entropy(std::span<const double> p);

// Index of the largest entry, lowest index on ties.
TokenId argmax(std::span<const double> values);

// S = P + (alpha * H_norm(P)) * U. Entries outside the evidence support are
// copied from P untouched.
FusedDistribution fuse(std::span<const double> p, const TokenEvidence& evidence,
                       const FusionConfig& cfg);

// One full step: softmax, Top-R, head gating, value calibration, fusion.
// Throws InputError if the snapshot fails validation.
FusedDistribution decode_step(const StepSnapshot& s, const DecodeConfig& cfg);

// Plain argmax over P with the same diagnostics layout (empty evidence).
FusedDistribution greedy_step(const StepSnapshot& s);

enum class PolicyKind : std::uint8_t { kGreedy, kHave };

struct Policy {
  PolicyKind kind = PolicyKind::kHave;
  DecodeConfig config;

  static Policy greedy() { return {PolicyKind::kGreedy, {}}; }
  static Policy have(DecodeConfig cfg = {}) { return {PolicyKind::kHave, std::move(cfg)}; }
};

FusedDistribution decode_with(const Policy& policy, const StepSnapshot& s);

// Re-checks the guarantees of a HAVE step: positive unit-sum head weights,
// evidence confined to the support with unit mass (or empty), S equal to P
// bit for bit off the evidence keys, and `chosen` the argmax of S. Throws
// InvariantViolation. decode_step calls it before returning.
void check_postconditions(const FusedDistribution& d);

}  // namespace have
