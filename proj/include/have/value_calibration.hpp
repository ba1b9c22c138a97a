#pragma once

/**
 * Value calibration: turns attention rows and value norms into a
 * vocabulary-aligned evidence distribution confined to the Top-R support.
 *
 * Per head:  sink-correct the attention row, multiply by the value norm of
 * the kv-head the query head reads, renormalize within the head. Across
 * heads: weighted sum with the gating weights (optionally times an
 * estimator mask), then accumulate per token id and restrict to R_t.
 *
 * If the restricted mass vanishes, the whole computation is redone with
 * uniform head weights and no mask. If that is degenerate too, the evidence
 * is empty and fusion leaves P_t untouched.
 */

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "have/head_gating.hpp"
#include "have/sink_policy.hpp"
#include "have/snapshot.hpp"

namespace have {

// 1 keeps a position, 0 masks it as a sink.
using SinkMask = std::vector<std::uint8_t>;

// Token id -> evidence mass. Ordered so iteration is deterministic.
using VocabScores = std::map<TokenId, double>;

inline constexpr std::size_t kEstimatorChannels = 7;
using FeatureRow = std::array<double, kEstimatorChannels>;

// Logistic mask m(j) = sigmoid(w . f(j) + b) over the 7-channel layout:
//   0 gated sink-corrected attention   sum_h w_h * a~_h(j)
//   1 gated calibrated evidence        sum_h w_h * r^_h(j)
//   2 max_h a~_h(j)
//   3 max_h r^_h(j)
//   4 mean value norm over (layer, kv-head) at j, z-scored over the context
//   5 relative position j / |C|
//   6 dedup weight omega(j)
struct EstimatorSpec {
  std::vector<double> weights;
  double bias = 0.0;
  bool enabled = false;

  // Parses lines "w[i] <float>" (i in 0..6) and "b <float>". Blank lines and
  // lines starting with '#' are skipped. The result is enabled.
  static EstimatorSpec parse(std::istream& in);
  static EstimatorSpec load(const std::filesystem::path& path);
};

struct CalibrationConfig {
  static constexpr double kDefaultEpsilon = 1e-12;
  static constexpr double kDefaultFallbackThreshold = 1e-6;

  double epsilon = kDefaultEpsilon;
  // Restricted mass below this counts as degenerate and triggers the fallback.
  double fallback_threshold = kDefaultFallbackThreshold;
  SinkPolicy sink_policy;
  EstimatorSpec estimator;
  // false skips the value-norm product and the per-head renormalization
  // (the no-VC ablation): evidence comes from sink-corrected attention.
  bool value_augment = true;
};

// Per-head intermediates, laid out [layer][head][position].
struct CalibratedHeads {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t positions = 0;
  std::vector<double> a_tilde;
  std::vector<double> r_hat;

  std::span<const double> a_tilde_row(std::size_t layer, std::size_t head) const {
    return std::span<const double>(a_tilde).subspan((layer * heads + head) * positions, positions);
  }
  std::span<const double> r_hat_row(std::size_t layer, std::size_t head) const {
    return std::span<const double>(r_hat).subspan((layer * heads + head) * positions, positions);
  }
};

struct TokenEvidence {
  std::vector<double> ctx_scores;
  VocabScores vocab_scores;
  bool fallback_used = false;

  bool empty() const noexcept { return vocab_scores.empty(); }
};

SinkMask sink_mask(std::span<const ContextToken> context, const SinkPolicy& policy);

// a(j) M(j) / (sum_k a(k) M(k) + eps). Throws DimensionError on length mismatch.
std::vector<double> sink_correct(std::span<const float> row, std::span<const std::uint8_t> mask,
                                 double eps);

// r(j) = a~(j) * norm(j). Throws DimensionError on length mismatch.
std::vector<double> value_augment(std::span<const double> a_tilde, std::span<const float> norms);

// r(j) / (sum r + eps).
std::vector<double> head_normalize(std::span<const double> r, double eps);

// Sink correction (and, when cfg.value_augment, value augmentation plus
// per-head normalization) for every head of the snapshot. Head h reads the
// value norms of kv-head h / gqa_group_size.
CalibratedHeads calibrate_heads(const StepSnapshot& s, std::span<const std::uint8_t> mask,
                                const CalibrationConfig& cfg);

std::vector<FeatureRow> estimator_features(const StepSnapshot& s, const CalibratedHeads& heads,
                                           const HeadWeights& hw, std::span<const double> omega);

// Throws DimensionError when the weight vector does not match the layout.
std::vector<double> estimator_mask(std::span<const FeatureRow> features, const EstimatorSpec& spec);

// U_ctx(j) = [m(j)] * sum_{l,h} w_{l,h} r^_{l,h}(j).
std::vector<double> aggregate_evidence(const CalibratedHeads& heads, const HeadWeights& hw,
                                       std::optional<std::span<const double>> mask = std::nullopt);

// U(v) = sum of u_ctx over positions holding token v. Positions with zero
// mass contribute no key.
VocabScores project_to_vocab(std::span<const double> u_ctx, std::span<const ContextToken> context);

// Keeps keys in `support` (sorted ascending) and renormalizes by
// (sum over support + eps). Returns nullopt when the surviving mass is below
// `threshold`, signalling that the caller should fall back.
std::optional<VocabScores> restrict_top_r(const VocabScores& scores,
                                          std::span<const TokenId> support, double eps,
                                          double threshold);

// Uniform-head evidence without the estimator mask, recomputed from the
// sink correction onward.
std::vector<double> fallback_evidence(const StepSnapshot& s, const CalibrationConfig& cfg);

// Whole evidence construction for one step. `support` is R_t sorted ascending.
TokenEvidence build_utilization(const StepSnapshot& s, const HeadWeights& hw,
                                std::span<const TokenId> support, const CalibrationConfig& cfg);

}  // namespace have
