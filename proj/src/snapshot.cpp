#include "have/snapshot.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include "have/error.hpp"
#include "have/sink_policy.hpp"

namespace have {
namespace {

bool same_bits(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return false;
  }
  return true;
}

class Collector {
 public:
  explicit Collector(ValidationReport& report) : report_(report) {}

  template <typename... Parts>
  void add(ViolationKind kind, const Parts&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    report_.violations.push_back({kind, os.str()});
  }

 private:
  ValidationReport& report_;
};

}  // namespace

std::span<const float> StepSnapshot::attention_row(std::uint32_t layer,
                                                   std::uint32_t head) const {
  const std::size_t n = context.size();
  return std::span<const float>(attention).subspan((std::size_t{layer} * num_heads + head) * n, n);
}

std::span<float> StepSnapshot::attention_row(std::uint32_t layer, std::uint32_t head) {
  const std::size_t n = context.size();
  return std::span<float>(attention).subspan((std::size_t{layer} * num_heads + head) * n, n);
}

std::span<const float> StepSnapshot::value_norm_row(std::uint32_t layer,
                                                    std::uint32_t kv_head) const {
  const std::size_t n = context.size();
  return std::span<const float>(value_norms)
      .subspan((std::size_t{layer} * num_kv_heads + kv_head) * n, n);
}

std::span<float> StepSnapshot::value_norm_row(std::uint32_t layer, std::uint32_t kv_head) {
  const std::size_t n = context.size();
  return std::span<float>(value_norms).subspan((std::size_t{layer} * num_kv_heads + kv_head) * n, n);
}

bool bitwise_equal(const StepSnapshot& a, const StepSnapshot& b) {
  return a.step == b.step && a.context == b.context && a.num_layers == b.num_layers &&
         a.num_heads == b.num_heads && a.num_kv_heads == b.num_kv_heads &&
         same_bits(a.attention, b.attention) && same_bits(a.value_norms, b.value_norms) &&
         same_bits(a.logits, b.logits);
}

bool bitwise_equal(const TraceFile& a, const TraceFile& b) {
  if (!(a.header == b.header) || a.steps.size() != b.steps.size()) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    if (!bitwise_equal(a.steps[i], b.steps[i])) return false;
  }
  return true;
}

TraceHeader header_for(const StepSnapshot& s, std::string tokenizer) {
  TraceHeader h;
  h.vocab_size = static_cast<std::uint32_t>(s.logits.size());
  h.num_layers = s.num_layers;
  h.num_heads = s.num_heads;
  h.num_kv_heads = s.num_kv_heads;
  h.tokenizer = std::move(tokenizer);
  return h;
}

const char* to_string(ViolationKind kind) noexcept {
  switch (kind) {
    case ViolationKind::kDimensionMismatch: return "dimension-mismatch";
    case ViolationKind::kHeadDivisibility: return "head-divisibility";
    case ViolationKind::kAttentionRange: return "attention-range";
    case ViolationKind::kAttentionNormalization: return "attention-normalization";
    case ViolationKind::kNegativeValueNorm: return "negative-value-norm";
    case ViolationKind::kNonFinite: return "non-finite";
    case ViolationKind::kContextPositions: return "context-positions";
    case ViolationKind::kEmptyContext: return "empty-context";
    case ViolationKind::kSinkClassification: return "sink-classification";
    case ViolationKind::kStepOrder: return "step-order";
  }
  return "unknown";
}

std::size_t ValidationReport::count(ViolationKind kind) const noexcept {
  return static_cast<std::size_t>(std::count_if(
      violations.begin(), violations.end(), [kind](const Violation& v) { return v.kind == kind; }));
}

ValidationReport validate_snapshot(const StepSnapshot& s, const TraceHeader& header) {
  ValidationReport report;
  Collector out(report);

  if (s.num_layers != header.num_layers || s.num_heads != header.num_heads ||
      s.num_kv_heads != header.num_kv_heads) {
    out.add(ViolationKind::kDimensionMismatch, "step ", s.step, ": head layout (", s.num_layers,
            ", ", s.num_heads, ", ", s.num_kv_heads, ") differs from header (", header.num_layers,
            ", ", header.num_heads, ", ", header.num_kv_heads, ")");
  }
  if (s.num_kv_heads == 0 || s.num_heads % s.num_kv_heads != 0) {
    out.add(ViolationKind::kHeadDivisibility, "step ", s.step, ": H=", s.num_heads,
            " is not divisible by H_kv=", s.num_kv_heads);
  }
  if (s.logits.size() != header.vocab_size) {
    out.add(ViolationKind::kDimensionMismatch, "step ", s.step, ": logits length ",
            s.logits.size(), " != |V|=", header.vocab_size);
  }
  for (std::size_t v = 0; v < s.logits.size(); ++v) {
    if (!std::isfinite(s.logits[v])) {
      out.add(ViolationKind::kNonFinite, "step ", s.step, ": logit ", v, " is not finite");
      break;
    }
  }

  const std::size_t n = s.context.size();
  if (n == 0) out.add(ViolationKind::kEmptyContext, "step ", s.step, ": empty context");
  for (std::size_t j = 0; j < n; ++j) {
    const ContextToken& tok = s.context[j];
    if (tok.position != j) {
      out.add(ViolationKind::kContextPositions, "step ", s.step, ": context token ", j,
              " has position ", tok.position);
    }
    if (header.vocab_size != 0 && tok.token_id >= header.vocab_size) {
      out.add(ViolationKind::kDimensionMismatch, "step ", s.step, ": token id ", tok.token_id,
              " outside vocabulary");
    }
    if (header.sink_policy_id == SinkPolicy::kV1 && !tok.is_sink &&
        is_whitespace_surface(tok.surface)) {
      out.add(ViolationKind::kSinkClassification, "step ", s.step, ": whitespace token at ", j,
              " is not flagged as a sink");
    }
  }

  const std::size_t attn_expected = s.head_count() * n;
  const std::size_t norms_expected = std::size_t{s.num_layers} * s.num_kv_heads * n;
  const bool attn_shaped = s.attention.size() == attn_expected;
  if (!attn_shaped) {
    out.add(ViolationKind::kDimensionMismatch, "step ", s.step, ": attention has ",
            s.attention.size(), " entries, expected ", attn_expected);
  }
  if (s.value_norms.size() != norms_expected) {
    out.add(ViolationKind::kDimensionMismatch, "step ", s.step, ": value norms have ",
            s.value_norms.size(), " entries, expected ", norms_expected);
  }

  if (attn_shaped && n > 0) {
    for (std::uint32_t l = 0; l < s.num_layers; ++l) {
      for (std::uint32_t h = 0; h < s.num_heads; ++h) {
        const auto row = s.attention_row(l, h);
        double sum = 0.0;
        bool finite = true;
        bool in_range = true;
        for (float a : row) {
          if (!std::isfinite(a)) {
            finite = false;
            continue;
          }
          if (a < 0.0f || a > 1.0f) in_range = false;
          sum += a;
        }
        if (!finite) {
          out.add(ViolationKind::kNonFinite, "step ", s.step, ": attention row (", l, ", ", h,
                  ") has non-finite weights");
          continue;
        }
        if (!in_range) {
          out.add(ViolationKind::kAttentionRange, "step ", s.step, ": attention row (", l, ", ",
                  h, ") has weights outside [0, 1]");
        }
        if (std::abs(sum - 1.0) > kAttentionRowTolerance) {
          out.add(ViolationKind::kAttentionNormalization, "step ", s.step, ": attention row (", l,
                  ", ", h, ") sums to ", sum);
        }
      }
    }
  }
  for (float norm : s.value_norms) {
    if (!std::isfinite(norm)) {
      out.add(ViolationKind::kNonFinite, "step ", s.step, ": non-finite value norm");
      break;
    }
  }
  for (float norm : s.value_norms) {
    if (norm < 0.0f) {
      out.add(ViolationKind::kNegativeValueNorm, "step ", s.step, ": negative value norm");
      break;
    }
  }
  return report;
}

ValidationReport validate_trace(const TraceFile& trace) {
  ValidationReport report;
  const TraceHeader& h = trace.header;
  if (h.num_kv_heads == 0 || h.num_heads % h.num_kv_heads != 0) {
    report.violations.push_back({ViolationKind::kHeadDivisibility,
                                 "header: H=" + std::to_string(h.num_heads) +
                                     " is not divisible by H_kv=" + std::to_string(h.num_kv_heads)});
  }
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const StepSnapshot& s = trace.steps[i];
    if (i > 0 && s.step <= trace.steps[i - 1].step) {
      report.violations.push_back(
          {ViolationKind::kStepOrder, "step " + std::to_string(s.step) +
                                          " does not follow step " +
                                          std::to_string(trace.steps[i - 1].step)});
    }
    auto step_report = validate_snapshot(s, h);
    for (auto& v : step_report.violations) {
      // the header-level divisibility problem is reported once
      if (v.kind == ViolationKind::kHeadDivisibility && !report.ok() &&
          report.violations.front().kind == ViolationKind::kHeadDivisibility) {
        continue;
      }
      report.violations.push_back(std::move(v));
    }
  }
  return report;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("softmax: non-finite logit");
    max_logit = std::max(max_logit, z);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_logit);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

std::vector<double> softmax(std::span<const float> logits) {
  std::vector<double> widened(logits.begin(), logits.end());
  return softmax(std::span<const double>(widened));
}

}  // namespace have
