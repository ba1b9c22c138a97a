#include "have/value_calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "have/error.hpp"

namespace have {
namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

EstimatorSpec EstimatorSpec::parse(std::istream& in) {
  EstimatorSpec spec;
  spec.enabled = true;
  std::vector<std::optional<double>> w(kEstimatorChannels);
  bool have_bias = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key.front() == '#') continue;
    double value = 0.0;
    if (!(ls >> value)) {
      throw InputError("estimator file line " + std::to_string(line_no) + ": missing value");
    }
    if (key == "b") {
      spec.bias = value;
      have_bias = true;
      continue;
    }
    std::size_t index = 0;
    if (key.size() < 4 || key.rfind("w[", 0) != 0 || key.back() != ']') {
      throw InputError("estimator file line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    try {
      index = std::stoul(key.substr(2, key.size() - 3));
    } catch (const std::exception&) {
      throw InputError("estimator file line " + std::to_string(line_no) + ": bad index in '" + key + "'");
    }
    if (index >= kEstimatorChannels) {
      throw DimensionError("estimator file line " + std::to_string(line_no) + ": weight index " +
                           std::to_string(index) + " outside the 7-channel layout");
    }
    w[index] = value;
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!w[i]) throw DimensionError("estimator file: missing w[" + std::to_string(i) + "]");
    spec.weights.push_back(*w[i]);
  }
  if (!have_bias) throw InputError("estimator file: missing bias 'b'");
  return spec;
}

EstimatorSpec EstimatorSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open estimator file " + path.string());
  return parse(in);
}

SinkMask sink_mask(std::span<const ContextToken> context, const SinkPolicy& policy) {
  SinkMask mask(context.size());
  for (std::size_t j = 0; j < context.size(); ++j) mask[j] = policy.is_sink(context[j]) ? 0 : 1;
  return mask;
}

std::vector<double> sink_correct(std::span<const float> row, std::span<const std::uint8_t> mask,
                                 double eps) {
  if (row.size() != mask.size()) throw DimensionError("sink_correct: row and mask lengths differ");
  std::vector<double> out(row.size());
  double kept = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    out[j] = mask[j] ? static_cast<double>(row[j]) : 0.0;
    kept += out[j];
  }
  const double denom = kept + eps;
  for (double& v : out) v /= denom;
  return out;
}

std::vector<double> value_augment(std::span<const double> a_tilde, std::span<const float> norms) {
  if (a_tilde.size() != norms.size()) {
    throw DimensionError("value_augment: attention and norm lengths differ");
  }
  std::vector<double> out(a_tilde.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = a_tilde[j] * static_cast<double>(norms[j]);
  return out;
}

std::vector<double> head_normalize(std::span<const double> r, double eps) {
  double total = 0.0;
  for (double v : r) total += v;
  const double denom = total + eps;
  std::vector<double> out(r.begin(), r.end());
  for (double& v : out) v /= denom;
  return out;
}

CalibratedHeads calibrate_heads(const StepSnapshot& s, std::span<const std::uint8_t> mask,
                                const CalibrationConfig& cfg) {
  const std::size_t n = s.context_size();
  if (s.gqa_group_size() == 0) throw DimensionError("calibrate_heads: H not divisible by H_kv");
  if (s.attention.size() != s.head_count() * n ||
      s.value_norms.size() != std::size_t{s.num_layers} * s.num_kv_heads * n) {
    throw DimensionError("calibrate_heads: tensors do not match snapshot dimensions");
  }
  CalibratedHeads out;
  out.layers = s.num_layers;
  out.heads = s.num_heads;
  out.positions = n;
  out.a_tilde.reserve(s.head_count() * n);
  out.r_hat.reserve(s.head_count() * n);
  for (std::uint32_t l = 0; l < s.num_layers; ++l) {
    for (std::uint32_t h = 0; h < s.num_heads; ++h) {
      const auto a_tilde = sink_correct(s.attention_row(l, h), mask, cfg.epsilon);
      out.a_tilde.insert(out.a_tilde.end(), a_tilde.begin(), a_tilde.end());
      if (cfg.value_augment) {
        const auto r = value_augment(a_tilde, s.value_norm_row(l, s.kv_head_for(h)));
        const auto r_hat = head_normalize(r, cfg.epsilon);
        out.r_hat.insert(out.r_hat.end(), r_hat.begin(), r_hat.end());
      } else {
        out.r_hat.insert(out.r_hat.end(), a_tilde.begin(), a_tilde.end());
      }
    }
  }
  return out;
}

std::vector<FeatureRow> estimator_features(const StepSnapshot& s, const CalibratedHeads& heads,
                                           const HeadWeights& hw, std::span<const double> omega) {
  const std::size_t n = heads.positions;
  if (omega.size() != n || hw.weights.layers != heads.layers || hw.weights.heads != heads.heads) {
    throw DimensionError("estimator_features: intermediates do not match");
  }
  std::vector<FeatureRow> features(n, FeatureRow{});
  for (std::size_t l = 0; l < heads.layers; ++l) {
    for (std::size_t h = 0; h < heads.heads; ++h) {
      const double w = hw.weights(l, h);
      const auto a = heads.a_tilde_row(l, h);
      const auto r = heads.r_hat_row(l, h);
      for (std::size_t j = 0; j < n; ++j) {
        features[j][0] += w * a[j];
        features[j][1] += w * r[j];
        features[j][2] = std::max(features[j][2], a[j]);
        features[j][3] = std::max(features[j][3], r[j]);
      }
    }
  }

  // mean value norm per position, then z-scored across the context
  std::vector<double> mean_norm(n, 0.0);
  const std::size_t kv_rows = std::size_t{s.num_layers} * s.num_kv_heads;
  for (std::uint32_t l = 0; l < s.num_layers; ++l) {
    for (std::uint32_t kv = 0; kv < s.num_kv_heads; ++kv) {
      const auto norms = s.value_norm_row(l, kv);
      for (std::size_t j = 0; j < n; ++j) mean_norm[j] += norms[j];
    }
  }
  double mu = 0.0;
  for (double& m : mean_norm) {
    if (kv_rows > 0) m /= static_cast<double>(kv_rows);
    mu += m;
  }
  mu /= static_cast<double>(std::max<std::size_t>(n, 1));
  double var = 0.0;
  for (double m : mean_norm) var += (m - mu) * (m - mu);
  const double sd = std::sqrt(var / static_cast<double>(std::max<std::size_t>(n, 1)));

  for (std::size_t j = 0; j < n; ++j) {
    features[j][4] = sd > 0.0 ? (mean_norm[j] - mu) / sd : 0.0;
    features[j][5] = static_cast<double>(j) / static_cast<double>(n);
    features[j][6] = omega[j];
  }
  return features;
}

std::vector<double> estimator_mask(std::span<const FeatureRow> features, const EstimatorSpec& spec) {
  if (spec.weights.size() != kEstimatorChannels) {
    throw DimensionError("estimator_mask: expected " + std::to_string(kEstimatorChannels) +
                         " weights, got " + std::to_string(spec.weights.size()));
  }
  std::vector<double> mask(features.size());
  for (std::size_t j = 0; j < features.size(); ++j) {
    double z = spec.bias;
    for (std::size_t c = 0; c < kEstimatorChannels; ++c) z += spec.weights[c] * features[j][c];
    mask[j] = logistic(z);
  }
  return mask;
}

std::vector<double> aggregate_evidence(const CalibratedHeads& heads, const HeadWeights& hw,
                                       std::optional<std::span<const double>> mask) {
  if (hw.weights.layers != heads.layers || hw.weights.heads != heads.heads) {
    throw DimensionError("aggregate_evidence: head weights do not match the head grid");
  }
  if (mask && mask->size() != heads.positions) {
    throw DimensionError("aggregate_evidence: mask length does not match the context");
  }
  std::vector<double> u(heads.positions, 0.0);
  for (std::size_t l = 0; l < heads.layers; ++l) {
    for (std::size_t h = 0; h < heads.heads; ++h) {
      const double w = hw.weights(l, h);
      const auto r = heads.r_hat_row(l, h);
      for (std::size_t j = 0; j < u.size(); ++j) u[j] += w * r[j];
    }
  }
  if (mask) {
    for (std::size_t j = 0; j < u.size(); ++j) u[j] *= (*mask)[j];
  }
  return u;
}

VocabScores project_to_vocab(std::span<const double> u_ctx, std::span<const ContextToken> context) {
  if (u_ctx.size() != context.size()) {
    throw DimensionError("project_to_vocab: evidence and context lengths differ");
  }
  VocabScores out;
  for (std::size_t j = 0; j < u_ctx.size(); ++j) {
    if (u_ctx[j] != 0.0) out[context[j].token_id] += u_ctx[j];
  }
  return out;
}

std::optional<VocabScores> restrict_top_r(const VocabScores& scores,
                                          std::span<const TokenId> support, double eps,
                                          double threshold) {
  VocabScores kept;
  double mass = 0.0;
  for (TokenId v : support) {
    if (auto it = scores.find(v); it != scores.end()) {
      kept.emplace(v, it->second);
      mass += it->second;
    }
  }
  if (!(mass >= threshold)) return std::nullopt;
  const double denom = mass + eps;
  for (auto& [id, value] : kept) value /= denom;
  return kept;
}

std::vector<double> fallback_evidence(const StepSnapshot& s, const CalibrationConfig& cfg) {
  const SinkMask mask = sink_mask(s.context, cfg.sink_policy);
  const CalibratedHeads heads = calibrate_heads(s, mask, cfg);
  return aggregate_evidence(heads, uniform_head_weights(s.num_layers, s.num_heads));
}

TokenEvidence build_utilization(const StepSnapshot& s, const HeadWeights& hw,
                                std::span<const TokenId> support, const CalibrationConfig& cfg) {
  const SinkMask mask = sink_mask(s.context, cfg.sink_policy);
  const CalibratedHeads heads = calibrate_heads(s, mask, cfg);

  TokenEvidence out;
  if (cfg.estimator.enabled) {
    const DedupWeights omega = dedup_weights(s.context);
    const auto features = estimator_features(s, heads, hw, omega);
    const auto m = estimator_mask(features, cfg.estimator);
    out.ctx_scores = aggregate_evidence(heads, hw, std::span<const double>(m));
  } else {
    out.ctx_scores = aggregate_evidence(heads, hw);
  }

  auto restricted = restrict_top_r(project_to_vocab(out.ctx_scores, s.context), support,
                                   cfg.epsilon, cfg.fallback_threshold);
  if (!restricted) {
    out.fallback_used = true;
    out.ctx_scores = aggregate_evidence(heads, uniform_head_weights(s.num_layers, s.num_heads));
    restricted = restrict_top_r(project_to_vocab(out.ctx_scores, s.context), support, cfg.epsilon,
                                cfg.fallback_threshold);
  }
  if (restricted) out.vocab_scores = std::move(*restricted);
  return out;
}

}  // namespace have
