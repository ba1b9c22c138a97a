#include "have/fusion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "have/error.hpp"

namespace have {
namespace {

void fill_normalized_copy(FusedDistribution& out) {
  const double total = std::accumulate(out.s.begin(), out.s.end(), 0.0);
  out.s_hat.resize(out.s.size());
  for (std::size_t v = 0; v < out.s.size(); ++v) out.s_hat[v] = out.s[v] / total;
}

void require_valid(const StepSnapshot& s) {
  const ValidationReport report = validate_snapshot(s, header_for(s));
  if (!report.ok()) {
    throw InputError("invalid snapshot at step " + std::to_string(s.step) + ": " +
                     report.violations.front().message);
  }
}

}  // namespace

std::vector<TokenId> top_r_support(std::span<const double> p, std::uint32_t top_rank) {
  if (top_rank == 0) throw DomainError("top_r_support: R must be at least 1");
  std::vector<TokenId> ids(p.size());
  std::iota(ids.begin(), ids.end(), TokenId{0});
  const std::size_t keep = std::min<std::size_t>(top_rank, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                    [&](TokenId a, TokenId b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
  ids.resize(keep);
  std::sort(ids.begin(), ids.end());
  return ids;
}

double normalized_entropy(std::span<const double> p) {
  if (p.size() < 2) throw DomainError("normalized_entropy: |V| must be at least 2");
  double h = 0.0;
  for (double q : p) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return std::clamp(h / std::log(static_cast<double>(p.size())), 0.0, 1.0);
}

TokenId argmax(std::span<const double> values) {
  TokenId best = 0;
  for (std::size_t v = 1; v < values.size(); ++v) {
    if (values[v] > values[best]) best = static_cast<TokenId>(v);
  }
  return best;
}

FusedDistribution fuse(std::span<const double> p, const TokenEvidence& evidence,
                       const FusionConfig& cfg) {
  FusedDistribution out;
  out.p.assign(p.begin(), p.end());
  out.evidence = evidence;
  out.h_norm = normalized_entropy(p);
  out.s = out.p;
  const double scale = cfg.alpha * out.h_norm;
  for (const auto& [id, mass] : evidence.vocab_scores) {
    if (id >= out.s.size()) throw DimensionError("fuse: evidence token id outside vocabulary");
    out.s[id] = out.p[id] + scale * mass;
  }
  out.chosen = argmax(out.s);
  fill_normalized_copy(out);
  return out;
}

FusedDistribution decode_step(const StepSnapshot& s, const DecodeConfig& cfg) {
  require_valid(s);
  const std::vector<double> p = softmax(std::span<const float>(s.logits));
  std::vector<TokenId> support = top_r_support(p, cfg.fusion.top_rank);

  HeadWeights hw = cfg.ablations.no_hag ? uniform_head_weights(s.num_layers, s.num_heads)
                                        : compute_head_weights(s, cfg.gating);
  CalibrationConfig calibration = cfg.calibration;
  calibration.value_augment = calibration.value_augment && !cfg.ablations.no_vc;

  const TokenEvidence evidence = build_utilization(s, hw, support, calibration);
  FusedDistribution out = fuse(p, evidence, cfg.fusion);
  out.support = std::move(support);
  out.head_weights = std::move(hw);
  check_postconditions(out);
  return out;
}

FusedDistribution greedy_step(const StepSnapshot& s) {
  require_valid(s);
  FusedDistribution out;
  out.p = softmax(std::span<const float>(s.logits));
  out.h_norm = out.p.size() >= 2 ? normalized_entropy(out.p) : 0.0;
  out.s = out.p;
  out.chosen = argmax(out.s);
  fill_normalized_copy(out);
  return out;
}

FusedDistribution decode_with(const Policy& policy, const StepSnapshot& s) {
  return policy.kind == PolicyKind::kGreedy ? greedy_step(s) : decode_step(s, policy.config);
}

void check_postconditions(const FusedDistribution& d) {
  const auto& w = d.head_weights.weights.values;
  double w_sum = 0.0;
  for (double x : w) {
    if (!(x > 0.0)) throw InvariantViolation("head weight is not positive");
    w_sum += x;
  }
  if (!w.empty() && std::abs(w_sum - 1.0) > 1e-9) throw InvariantViolation("head weights do not sum to 1");

  double mass = 0.0;
  for (const auto& [id, m] : d.evidence.vocab_scores) {
    if (!std::binary_search(d.support.begin(), d.support.end(), id)) {
      throw InvariantViolation("evidence outside the Top-R support");
    }
    if (!(m >= 0.0)) throw InvariantViolation("negative evidence mass");
    mass += m;
  }
  if (!d.evidence.empty() && std::abs(mass - 1.0) > 1e-6) {
    throw InvariantViolation("evidence mass does not sum to 1");
  }

  if (d.s.size() != d.p.size()) throw InvariantViolation("S and P differ in length");
  for (std::size_t v = 0; v < d.p.size(); ++v) {
    if (d.evidence.vocab_scores.contains(static_cast<TokenId>(v))) continue;
    if (std::bit_cast<std::uint64_t>(d.s[v]) != std::bit_cast<std::uint64_t>(d.p[v])) {
      throw InvariantViolation("S differs from P outside the evidence support");
    }
  }
  if (d.chosen != argmax(d.s)) throw InvariantViolation("chosen token is not the argmax of S");
}

}  // namespace have
