#include "have/toy_transformer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include "have/error.hpp"
#include "have/kv_config.hpp"

namespace have::toy {
namespace {

class WeightStream {
 public:
  explicit WeightStream(std::uint64_t seed) : engine_(seed) {}

  std::vector<float> draw(std::size_t count, std::size_t fan_in) {
    const double scale = std::sqrt(3.0 / static_cast<double>(fan_in));
    std::vector<float> out(count);
    for (float& w : out) {
      const double u = static_cast<double>(engine_() >> 40) * 0x1.0p-24;
      w = static_cast<float>((2.0 * u - 1.0) * scale);
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

// out[i] = sum_k w[i * in + k] * x[k]
void matvec(std::span<const float> w, std::span<const float> x, std::span<float> out) {
  const std::size_t in = x.size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    float acc = 0.0f;
    const float* row = w.data() + i * in;
    for (std::size_t k = 0; k < in; ++k) acc += row[k] * x[k];
    out[i] = acc;
  }
}

std::vector<float> rms_norm(std::span<const float> x) {
  float ss = 0.0f;
  for (float v : x) ss += v * v;
  const float inv = 1.0f / std::sqrt(ss / static_cast<float>(x.size()) + 1e-5f);
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv;
  return out;
}

void fnv_mix(std::uint64_t& h, std::span<const float> values) {
  for (float f : values) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) {
      h ^= (bits >> (8 * b)) & 0xFFu;
      h *= 0x100000001b3ULL;
    }
  }
}

}  // namespace

void ToyConfig::validate() const {
  if (vocab_size < ToyVocab::kFirstWord + 1) throw InputError("toy config: vocab_size must be at least 4");
  if (num_layers == 0 || num_heads == 0 || num_kv_heads == 0 || head_dim == 0) {
    throw InputError("toy config: layer, head, kv-head, and head_dim counts must be positive");
  }
  if (num_heads % num_kv_heads != 0) {
    throw InputError("toy config: num_heads (" + std::to_string(num_heads) +
                     ") is not divisible by num_kv_heads (" + std::to_string(num_kv_heads) + ")");
  }
  if (max_context == 0) throw InputError("toy config: max_context must be positive");
  if (window && *window == 0) throw InputError("toy config: window must be at least 1");
}

ToyConfig ToyConfig::parse(std::istream& in) {
  const KeyValueFile kv = KeyValueFile::parse(in, "toy config");
  ToyConfig cfg;
  cfg.vocab_size = static_cast<std::uint32_t>(kv.get_uint("vocab_size", cfg.vocab_size));
  cfg.num_layers = static_cast<std::uint32_t>(kv.get_uint("num_layers", cfg.num_layers));
  cfg.num_heads = static_cast<std::uint32_t>(kv.get_uint("num_heads", cfg.num_heads));
  cfg.num_kv_heads = static_cast<std::uint32_t>(kv.get_uint("num_kv_heads", cfg.num_kv_heads));
  cfg.head_dim = static_cast<std::uint32_t>(kv.get_uint("head_dim", cfg.head_dim));
  cfg.max_context = static_cast<std::uint32_t>(kv.get_uint("max_context", cfg.max_context));
  if (const auto w = kv.get_uint("window", 0); w > 0) cfg.window = static_cast<std::uint32_t>(w);
  cfg.seed = kv.get_uint("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

ToyConfig ToyConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open toy config " + path.string());
  return parse(in);
}

ToyVocab::ToyVocab(std::uint32_t size) : size_(size) {
  if (size < kFirstWord + 1) throw InputError("toy vocabulary needs at least 4 entries");
}

std::string ToyVocab::surface(TokenId id) const {
  switch (id) {
    case kBos: return "<s>";
    case kEos: return "</s>";
    case kSpace: return " ";
    default: return " w" + std::to_string(id);
  }
}

std::vector<TokenId> ToyVocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const std::string& word : split_list(std::string(text))) {
    if (word == "<s>") {
      ids.push_back(kBos);
    } else if (word == "</s>") {
      ids.push_back(kEos);
    } else if (word.size() > 1 && word[0] == 'w' &&
               std::all_of(word.begin() + 1, word.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
               word.size() < 11 && std::stoull(word.substr(1)) >= kFirstWord &&
               std::stoull(word.substr(1)) < size_) {
      ids.push_back(static_cast<TokenId>(std::stoull(word.substr(1))));
    } else {
      std::uint32_t h = 2166136261u;
      for (unsigned char c : word) {
        h ^= c;
        h *= 16777619u;
      }
      ids.push_back(kFirstWord + h % (size_ - kFirstWord));
    }
  }
  return ids;
}

std::string ToyVocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < kFirstWord) continue;
    out += surface(id);
  }
  if (!out.empty() && out.front() == ' ') out.erase(0, 1);
  return out;
}

SinkPolicy ToyVocab::sink_policy() const {
  SinkPolicy policy;
  policy.special_ids = {kBos, kEos};
  return policy;
}

Model::Model(const ToyConfig& cfg) : cfg_(cfg), vocab_((cfg.validate(), cfg.vocab_size)) {
  const std::size_t d = cfg_.model_dim();
  const std::size_t kv_dim = std::size_t{cfg_.num_kv_heads} * cfg_.head_dim;
  ffn_dim_ = static_cast<std::uint32_t>(4 * d);

  WeightStream rng(cfg_.seed);
  // embeddings are drawn with fan_in 3 so entries land in [-1, 1)
  token_embedding_ = rng.draw(std::size_t{cfg_.vocab_size} * d, 3);
  position_embedding_ = rng.draw(std::size_t{cfg_.max_context} * d, 3);
  layers_.resize(cfg_.num_layers);
  for (Layer& layer : layers_) {
    layer.wq = rng.draw(d * d, d);
    layer.wk = rng.draw(kv_dim * d, d);
    layer.wv = rng.draw(kv_dim * d, d);
    layer.wo = rng.draw(d * d, d);
    layer.w1 = rng.draw(std::size_t{ffn_dim_} * d, d);
    layer.w2 = rng.draw(d * ffn_dim_, ffn_dim_);
  }
  // fan_in d / 4 doubles the logit spread so next-token distributions vary
  unembedding_ = rng.draw(std::size_t{cfg_.vocab_size} * d, std::max<std::size_t>(d / 4, 1));
}

std::uint64_t Model::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  fnv_mix(h, token_embedding_);
  fnv_mix(h, position_embedding_);
  for (const Layer& layer : layers_) {
    fnv_mix(h, layer.wq);
    fnv_mix(h, layer.wk);
    fnv_mix(h, layer.wv);
    fnv_mix(h, layer.wo);
    fnv_mix(h, layer.w1);
    fnv_mix(h, layer.w2);
  }
  fnv_mix(h, unembedding_);
  return h;
}

TraceHeader Model::trace_header() const {
  TraceHeader h;
  h.vocab_size = cfg_.vocab_size;
  h.num_layers = cfg_.num_layers;
  h.num_heads = cfg_.num_heads;
  h.num_kv_heads = cfg_.num_kv_heads;
  h.sink_policy_id = SinkPolicy::kV1;
  h.tokenizer = std::string(kToyTokenizerName);
  return h;
}

KVCache::KVCache(const ToyConfig& cfg)
    : num_layers_(cfg.num_layers),
      num_kv_heads_(cfg.num_kv_heads),
      head_dim_(cfg.head_dim),
      window_(cfg.window) {}

std::vector<std::uint64_t> KVCache::positions() const {
  std::vector<std::uint64_t> out;
  out.reserve(slots_.size());
  for (const Slot& s : slots_) out.push_back(s.position);
  return out;
}

std::vector<TokenId> KVCache::tokens() const {
  std::vector<TokenId> out;
  out.reserve(slots_.size());
  for (const Slot& s : slots_) out.push_back(s.token);
  return out;
}

std::span<const float> KVCache::value(std::size_t slot, std::uint32_t layer,
                                      std::uint32_t kv_head) const {
  const std::size_t offset = (std::size_t{layer} * num_kv_heads_ + kv_head) * head_dim_;
  return std::span<const float>(slots_.at(slot).values).subspan(offset, head_dim_);
}

std::span<const float> KVCache::key(std::size_t slot, std::uint32_t layer,
                                    std::uint32_t kv_head) const {
  const std::size_t offset = (std::size_t{layer} * num_kv_heads_ + kv_head) * head_dim_;
  return std::span<const float>(slots_.at(slot).keys).subspan(offset, head_dim_);
}

StepSnapshot forward_step(const Model& model, KVCache& cache, TokenId token) {
  const ToyConfig& cfg = model.cfg_;
  if (cache.num_layers_ != cfg.num_layers || cache.num_kv_heads_ != cfg.num_kv_heads ||
      cache.head_dim_ != cfg.head_dim || cache.window_ != cfg.window) {
    throw DimensionError("forward_step: cache was built for a different model configuration");
  }
  if (token >= cfg.vocab_size) {
    throw InputError("forward_step: token id " + std::to_string(token) + " outside vocabulary");
  }
  const std::uint64_t pos = cache.next_position_;
  if (pos >= cfg.max_context) {
    throw InputError("forward_step: position " + std::to_string(pos) +
                     " exceeds max_context " + std::to_string(cfg.max_context));
  }

  const std::size_t d = cfg.model_dim();
  const std::size_t hd = cfg.head_dim;
  const std::size_t kv_dim = std::size_t{cfg.num_kv_heads} * hd;
  const std::uint32_t group = cfg.group_size();

  cache.slots_.push_back({pos, token, std::vector<float>(cfg.num_layers * kv_dim),
                          std::vector<float>(cfg.num_layers * kv_dim)});
  ++cache.next_position_;
  if (cache.window_) {
    while (cache.slots_.size() > *cache.window_) cache.slots_.pop_front();
  }
  auto& slots = cache.slots_;
  const std::size_t n = slots.size();

  StepSnapshot snap;
  snap.step = pos;
  snap.num_layers = cfg.num_layers;
  snap.num_heads = cfg.num_heads;
  snap.num_kv_heads = cfg.num_kv_heads;
  const SinkPolicy policy = model.vocab_.sink_policy();
  snap.context.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    ContextToken tok;
    tok.position = static_cast<std::uint32_t>(j);
    tok.token_id = slots[j].token;
    tok.surface = model.vocab_.surface(tok.token_id);
    tok.is_sink = policy.is_sink(tok.token_id, tok.surface);
    snap.context.push_back(std::move(tok));
  }
  snap.attention.resize(std::size_t{cfg.num_layers} * cfg.num_heads * n);
  snap.value_norms.resize(std::size_t{cfg.num_layers} * cfg.num_kv_heads * n);

  std::vector<float> x(d);
  for (std::size_t i = 0; i < d; ++i) {
    x[i] = model.token_embedding_[std::size_t{token} * d + i] + model.position_embedding_[pos * d + i];
  }

  const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));
  std::vector<float> q(d), k(kv_dim), v(kv_dim), attn_out(d), proj(d);
  std::vector<float> hidden(model.ffn_dim_), scores(n);

  for (std::uint32_t l = 0; l < cfg.num_layers; ++l) {
    const Model::Layer& layer = model.layers_[l];
    const std::vector<float> h = rms_norm(x);
    matvec(layer.wq, h, q);
    matvec(layer.wk, h, k);
    matvec(layer.wv, h, v);
    std::copy(k.begin(), k.end(), slots.back().keys.begin() + l * kv_dim);
    std::copy(v.begin(), v.end(), slots.back().values.begin() + l * kv_dim);

    for (std::uint32_t head = 0; head < cfg.num_heads; ++head) {
      const std::uint32_t kvh = head / group;
      const float* qh = q.data() + head * hd;
      float max_score = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        const float* kj = slots[j].keys.data() + l * kv_dim + kvh * hd;
        float dot = 0.0f;
        for (std::size_t e = 0; e < hd; ++e) dot += qh[e] * kj[e];
        scores[j] = dot * inv_sqrt_hd;
        max_score = std::max(max_score, scores[j]);
      }
      float total = 0.0f;
      for (std::size_t j = 0; j < n; ++j) {
        scores[j] = std::exp(scores[j] - max_score);
        total += scores[j];
      }
      auto row = snap.attention_row(l, head);
      float* out = attn_out.data() + head * hd;
      std::fill(out, out + hd, 0.0f);
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = scores[j] / total;
        const float* vj = slots[j].values.data() + l * kv_dim + kvh * hd;
        for (std::size_t e = 0; e < hd; ++e) out[e] += row[j] * vj[e];
      }
    }
    matvec(layer.wo, attn_out, proj);
    for (std::size_t i = 0; i < d; ++i) x[i] += proj[i];

    const std::vector<float> h2 = rms_norm(x);
    matvec(layer.w1, h2, hidden);
    for (float& a : hidden) a = std::max(a, 0.0f);
    matvec(layer.w2, hidden, proj);
    for (std::size_t i = 0; i < d; ++i) x[i] += proj[i];

    for (std::uint32_t kvh = 0; kvh < cfg.num_kv_heads; ++kvh) {
      auto norms = snap.value_norm_row(l, kvh);
      for (std::size_t j = 0; j < n; ++j) {
        const float* vj = slots[j].values.data() + l * kv_dim + kvh * hd;
        double ss = 0.0;
        for (std::size_t e = 0; e < hd; ++e) ss += double{vj[e]} * vj[e];
        norms[j] = static_cast<float>(std::sqrt(ss));
      }
    }
  }

  const std::vector<float> final_h = rms_norm(x);
  snap.logits.resize(cfg.vocab_size);
  matvec(model.unembedding_, final_h, snap.logits);
  return snap;
}

}  // namespace have::toy
