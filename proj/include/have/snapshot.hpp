#pragma once

/**
 * Per-step activation snapshot.
 *
 * A StepSnapshot carries everything the decoder consumes at one step:
 * the visible context, the last-row attention of every (layer, head),
 * the Euclidean norm of every cached value vector per (layer, kv-head),
 * and the raw next-token logits.
 *
 * Tensors are stored flat, 32-bit, row-major:
 *   attention    [layer][head][position]
 *   value_norms  [layer][kv_head][position]
 * which is also the on-disk order of the trace format.
 */

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace have {

using TokenId = std::uint32_t;

struct ContextToken {
  std::uint32_t position = 0;
  TokenId token_id = 0;
  std::string surface;
  bool is_sink = false;

  friend bool operator==(const ContextToken&, const ContextToken&) = default;
};

struct TraceHeader {
  static constexpr std::uint32_t kCurrentVersion = 1;

  std::uint32_t version = kCurrentVersion;
  std::uint32_t vocab_size = 0;
  std::uint32_t num_layers = 0;
  std::uint32_t num_heads = 0;
  std::uint32_t num_kv_heads = 0;
  std::uint16_t sink_policy_id = 1;
  std::string tokenizer;

  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

struct StepSnapshot {
  std::uint64_t step = 0;
  std::vector<ContextToken> context;
  std::uint32_t num_layers = 0;
  std::uint32_t num_heads = 0;
  std::uint32_t num_kv_heads = 0;
  std::vector<float> attention;
  std::vector<float> value_norms;
  std::vector<float> logits;

  std::size_t context_size() const noexcept { return context.size(); }
  std::size_t vocab_size() const noexcept { return logits.size(); }
  std::size_t head_count() const noexcept {
    return static_cast<std::size_t>(num_layers) * num_heads;
  }

  // Query heads per kv-head. Zero when the dimensions are inconsistent.
  std::uint32_t gqa_group_size() const noexcept {
    if (num_kv_heads == 0 || num_heads % num_kv_heads != 0) return 0;
    return num_heads / num_kv_heads;
  }

  // kv-head whose cached values query head `head` reads.
  std::uint32_t kv_head_for(std::uint32_t head) const noexcept {
    return head / gqa_group_size();
  }

  std::span<const float> attention_row(std::uint32_t layer, std::uint32_t head) const;
  std::span<float> attention_row(std::uint32_t layer, std::uint32_t head);
  std::span<const float> value_norm_row(std::uint32_t layer, std::uint32_t kv_head) const;
  std::span<float> value_norm_row(std::uint32_t layer, std::uint32_t kv_head);
};

// Structural equality that compares every float by bit pattern, so NaN
// payloads and signed zeros count.
bool bitwise_equal(const StepSnapshot& a, const StepSnapshot& b);

struct TraceFile {
  TraceHeader header;
  std::vector<StepSnapshot> steps;
};

bool bitwise_equal(const TraceFile& a, const TraceFile& b);

// Header describing the dimensions of `s`.
TraceHeader header_for(const StepSnapshot& s, std::string tokenizer = {});

enum class ViolationKind {
  kDimensionMismatch,
  kHeadDivisibility,
  kAttentionRange,
  kAttentionNormalization,
  kNegativeValueNorm,
  kNonFinite,
  kContextPositions,
  kEmptyContext,
  kSinkClassification,
  kStepOrder,
};

const char* to_string(ViolationKind kind) noexcept;

struct Violation {
  ViolationKind kind;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
  std::size_t count(ViolationKind kind) const noexcept;
};

inline constexpr double kAttentionRowTolerance = 1e-4;

// Lists every violated snapshot invariant. Never throws.
ValidationReport validate_snapshot(const StepSnapshot& s, const TraceHeader& header);

// Header checks, per-step validation, and strictly increasing step numbers.
ValidationReport validate_trace(const TraceFile& trace);

// Numerically stable softmax (max subtraction), evaluated in double.
// Throws NumericError on NaN or infinite input.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const float> logits);

}  // namespace have
