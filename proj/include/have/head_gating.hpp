#pragma once

/**
 * Head-adaptive gating.
 *
 * Every (layer, head) gets an instance-level context-sensitivity score, the
 * attention mass it places on the visible context with repeated tokens
 * down-weighted by their multiplicity. Scores are normalized into instance
 * weights, optionally multiplied by base priors, floored at eta, and
 * renormalized. The floor keeps every head strictly positive: heads are
 * soft-weighted, never dropped.
 */

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "have/snapshot.hpp"

namespace have {

// Dense (layer, head) matrix, row-major.
struct HeadMatrix {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::vector<double> values;

  HeadMatrix() = default;
  HeadMatrix(std::size_t num_layers, std::size_t num_heads, double fill = 0.0)
      : layers(num_layers), heads(num_heads), values(num_layers * num_heads, fill) {}

  static HeadMatrix uniform(std::size_t num_layers, std::size_t num_heads);

  std::size_t size() const noexcept { return values.size(); }
  double& operator()(std::size_t layer, std::size_t head) { return values[layer * heads + head]; }
  double operator()(std::size_t layer, std::size_t head) const {
    return values[layer * heads + head];
  }
  double sum() const noexcept;
};

// omega(j) = 1 / #{k : token_id(k) == token_id(j)}.
using DedupWeights = std::vector<double>;

struct HeadScores {
  HeadMatrix scores;
};

struct HeadWeights {
  HeadMatrix weights;
  double eta = 0.0;
  double epsilon = 0.0;
};

struct GatingConfig {
  static constexpr double kDefaultEta = 1e-4;
  static constexpr double kDefaultEpsilon = 1e-8;

  double eta = kDefaultEta;
  double epsilon = kDefaultEpsilon;
  std::optional<HeadMatrix> base_priors;
};

// Throws InputError on an empty context.
DedupWeights dedup_weights(std::span<const ContextToken> context);

// Raw (pre sink-mask) attention weighted by omega. Throws DimensionError if
// omega does not match the context size.
HeadScores head_scores(const StepSnapshot& s, std::span<const double> omega);

// exp(log(s + eps)) / sum exp(log(s' + eps)), i.e. (s + eps) / sum(s' + eps).
// The exp-log form is kept literally. If every term vanishes (eps == 0 and
// all scores zero) the result is uniform.
HeadMatrix instance_weights(const HeadScores& scores, double epsilon);

// w ~ max(base * inst, eta), renormalized. A missing base is all ones.
// Throws DomainError for eta <= 0, negative priors, or shape mismatch.
HeadWeights gate_heads(const HeadMatrix& inst, const std::optional<HeadMatrix>& base, double eta);

// Full gating for one snapshot.
HeadWeights compute_head_weights(const StepSnapshot& s, const GatingConfig& cfg);

// 1 / (L * H) everywhere; the gating used by the no-HAG ablation and by the
// fallback path.
HeadWeights uniform_head_weights(std::size_t num_layers, std::size_t num_heads);

}  // namespace have
