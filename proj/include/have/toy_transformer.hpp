#pragma once

/**
 * Minimal decoder-only transformer with frozen random weights.
 *
 * Pre-norm blocks (RMSNorm without gain), learned absolute position
 * embeddings, grouped-query attention, one ReLU MLP per block, untied
 * unembedding. Everything is float32. Its only job is to produce genuine
 * causal last-row attention, a real KV cache, and logits, so that
 * snapshots can be generated end to end.
 *
 * Weight scheme: a std::mt19937_64 seeded with ToyConfig::seed is drawn in a
 * fixed order (token embedding, position embedding, then per layer Wq, Wk,
 * Wv, Wo, W1, W2, then the unembedding). Each 64-bit draw x becomes
 * u = (x >> 40) * 2^-24 in [0, 1) and the weight (2u - 1) * sqrt(3 / fan_in).
 * No library distribution is involved, so weights are bit-identical across
 * standard libraries.
 */

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "have/sink_policy.hpp"
#include "have/snapshot.hpp"

namespace have::toy {

struct ToyConfig {
  std::uint32_t vocab_size = 64;
  std::uint32_t num_layers = 2;
  std::uint32_t num_heads = 4;
  std::uint32_t num_kv_heads = 2;
  std::uint32_t head_dim = 8;
  std::uint32_t max_context = 256;
  std::optional<std::uint32_t> window;
  std::uint64_t seed = 0;

  // Throws InputError on invalid dimensions.
  void validate() const;

  std::uint32_t model_dim() const noexcept { return num_heads * head_dim; }
  std::uint32_t group_size() const noexcept { return num_heads / num_kv_heads; }

  // Keys: vocab_size, num_layers, num_heads, num_kv_heads, head_dim,
  // max_context, window (0 = off), seed.
  static ToyConfig parse(std::istream& in);
  static ToyConfig load(const std::filesystem::path& path);
};

// Toy vocabulary: 0 "<s>", 1 "</s>", 2 " ", and " w<id>" for every other id.
class ToyVocab {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kSpace = 2;
  static constexpr TokenId kFirstWord = 3;

  explicit ToyVocab(std::uint32_t size);

  std::uint32_t size() const noexcept { return size_; }
  std::string surface(TokenId id) const;
  // "w<N>" maps to N, "<s>"/"</s>" to the specials, anything else hashes
  // (FNV-1a) onto the word range.
  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;
  SinkPolicy sink_policy() const;

 private:
  std::uint32_t size_;
};

inline constexpr std::string_view kToyTokenizerName = "toy-vocab-v1";

class KVCache;

class Model {
 public:
  explicit Model(const ToyConfig& cfg);

  const ToyConfig& config() const noexcept { return cfg_; }
  const ToyVocab& vocab() const noexcept { return vocab_; }
  // FNV-1a over every weight's bit pattern.
  std::uint64_t checksum() const;
  TraceHeader trace_header() const;

 private:
  friend StepSnapshot forward_step(const Model&, KVCache&, TokenId);

  struct Layer {
    std::vector<float> wq, wk, wv, wo, w1, w2;
  };

  ToyConfig cfg_;
  ToyVocab vocab_;
  std::uint32_t ffn_dim_;
  std::vector<float> token_embedding_;
  std::vector<float> position_embedding_;
  std::vector<Layer> layers_;
  std::vector<float> unembedding_;
};

// Visible keys and values. Slots are shared by all layers; each slot holds
// the (layer, kv_head, head_dim) key and value for one absolute position.
class KVCache {
 public:
  explicit KVCache(const ToyConfig& cfg);

  std::size_t size() const noexcept { return slots_.size(); }
  std::uint64_t next_position() const noexcept { return next_position_; }
  std::vector<std::uint64_t> positions() const;
  std::vector<TokenId> tokens() const;

  std::span<const float> value(std::size_t slot, std::uint32_t layer, std::uint32_t kv_head) const;
  std::span<const float> key(std::size_t slot, std::uint32_t layer, std::uint32_t kv_head) const;

 private:
  friend StepSnapshot forward_step(const Model&, KVCache&, TokenId);

  struct Slot {
    std::uint64_t position = 0;
    TokenId token = 0;
    std::vector<float> keys;
    std::vector<float> values;
  };

  std::uint32_t num_layers_;
  std::uint32_t num_kv_heads_;
  std::uint32_t head_dim_;
  std::optional<std::uint32_t> window_;
  std::uint64_t next_position_ = 0;
  std::deque<Slot> slots_;
};

// Feeds one token: appends its KV slot, evicts beyond the window, and
// returns the snapshot for predicting the next token. snapshot.step is the
// absolute position of the fed token; snapshot.logits are the model logits.
// Throws InputError for an out-of-range token or an exhausted position
// table, DimensionError when the cache was built for another config.
StepSnapshot forward_step(const Model& model, KVCache& cache, TokenId token);

}  // namespace have::toy
