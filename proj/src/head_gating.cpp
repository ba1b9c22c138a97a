#include "have/head_gating.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "have/error.hpp"

namespace have {

HeadMatrix HeadMatrix::uniform(std::size_t num_layers, std::size_t num_heads) {
  const std::size_t n = num_layers * num_heads;
  return HeadMatrix(num_layers, num_heads, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
}

double HeadMatrix::sum() const noexcept {
  return std::accumulate(values.begin(), values.end(), 0.0);
}

DedupWeights dedup_weights(std::span<const ContextToken> context) {
  if (context.empty()) throw InputError("dedup_weights: empty context");
  std::unordered_map<TokenId, std::size_t> counts;
  for (const ContextToken& tok : context) ++counts[tok.token_id];
  DedupWeights omega(context.size());
  for (std::size_t j = 0; j < context.size(); ++j) {
    omega[j] = 1.0 / static_cast<double>(counts[context[j].token_id]);
  }
  return omega;
}

HeadScores head_scores(const StepSnapshot& s, std::span<const double> omega) {
  if (omega.size() != s.context_size()) {
    throw DimensionError("head_scores: omega has " + std::to_string(omega.size()) +
                         " entries for a context of " + std::to_string(s.context_size()));
  }
  if (s.attention.size() != s.head_count() * s.context_size()) {
    throw DimensionError("head_scores: attention tensor does not match snapshot dimensions");
  }
  HeadScores out{HeadMatrix(s.num_layers, s.num_heads)};
  for (std::uint32_t l = 0; l < s.num_layers; ++l) {
    for (std::uint32_t h = 0; h < s.num_heads; ++h) {
      const auto row = s.attention_row(l, h);
      double score = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) score += static_cast<double>(row[j]) * omega[j];
      out.scores(l, h) = score;
    }
  }
  return out;
}

HeadMatrix instance_weights(const HeadScores& scores, double epsilon) {
  HeadMatrix out = scores.scores;
  double total = 0.0;
  for (double& v : out.values) {
    v = std::exp(std::log(v + epsilon));
    total += v;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    return HeadMatrix::uniform(out.layers, out.heads);
  }
  for (double& v : out.values) v /= total;
  return out;
}

HeadWeights gate_heads(const HeadMatrix& inst, const std::optional<HeadMatrix>& base, double eta) {
  if (!(eta > 0.0)) throw DomainError("gate_heads: eta must be positive");
  if (base) {
    if (base->layers != inst.layers || base->heads != inst.heads) {
      throw DomainError("gate_heads: base priors shape does not match the head grid");
    }
    if (std::any_of(base->values.begin(), base->values.end(), [](double b) { return b < 0.0; })) {
      throw DomainError("gate_heads: base priors must be non-negative");
    }
  }
  HeadWeights out{HeadMatrix(inst.layers, inst.heads), eta, 0.0};
  double total = 0.0;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const double prior = base ? base->values[i] : 1.0;
    const double v = std::max(prior * inst.values[i], eta);
    out.weights.values[i] = v;
    total += v;
  }
  for (double& v : out.weights.values) v /= total;
  return out;
}

HeadWeights compute_head_weights(const StepSnapshot& s, const GatingConfig& cfg) {
  const DedupWeights omega = dedup_weights(s.context);
  const HeadScores scores = head_scores(s, omega);
  HeadWeights hw = gate_heads(instance_weights(scores, cfg.epsilon), cfg.base_priors, cfg.eta);
  hw.epsilon = cfg.epsilon;
  return hw;
}

HeadWeights uniform_head_weights(std::size_t num_layers, std::size_t num_heads) {
  return HeadWeights{HeadMatrix::uniform(num_layers, num_heads), 0.0, 0.0};
}

}  // namespace have
